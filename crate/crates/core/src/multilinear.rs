//! Dense 3-way tensor algebra.
//!
//! Tensors are stored column-major (mode-1 index fastest). Mode indices in
//! this API are 0-based: mode 0 is the first tensor mode.
//!
//! The mode-`n` unfolding has shape `(prod of the other dims) x I_n`. Row
//! indices enumerate the remaining modes in ascending order with the lower
//! mode varying fastest, so that with `M_0 = A_2 ⊙ A_1`, `M_1 = A_2 ⊙ A_0`
//! and `M_2 = A_1 ⊙ A_0`:
//!
//! ```text
//! unfold(cp_reconstruct(A_0, A_1, A_2), n) = M_n * A_n^T
//! ```

use nalgebra::DMatrix;

use crate::error::{dim_err, Result};

pub type Matrix = DMatrix<f64>;
pub type Dims = [usize; 3];

/// The two remaining modes of `mode`, in ascending order.
pub fn other_modes(mode: usize) -> (usize, usize) {
    match mode {
        0 => (1, 2),
        1 => (0, 2),
        2 => (0, 1),
        _ => panic!("tensor mode {mode} out of range (expected 0, 1 or 2)"),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    dims: Dims,
    values: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(dims: Dims) -> Self {
        Self {
            dims,
            values: vec![0.0; dims.iter().product()],
        }
    }

    pub fn from_values(dims: Dims, values: Vec<f64>) -> Result<Self> {
        let len: usize = dims.iter().product();
        if values.len() != len {
            return dim_err(format!(
                "tensor {dims:?} needs {len} values, got {}",
                values.len()
            ));
        }
        Ok(Self { dims, values })
    }

    /// Builds a tensor by evaluating `f(i, j, k)` at every position.
    pub fn from_fn(dims: Dims, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(dims.iter().product());
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    values.push(f(i, j, k));
                }
            }
        }
        Self { dims, values }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn linear_index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    /// Inverse of [`Tensor3::linear_index`].
    #[inline]
    pub fn position(&self, idx: usize) -> (usize, usize, usize) {
        let i = idx % self.dims[0];
        let rest = idx / self.dims[0];
        (i, rest % self.dims[1], rest / self.dims[1])
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.linear_index(i, j, k)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: f64) {
        let idx = self.linear_index(i, j, k);
        self.values[idx] = v;
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            dims: self.dims,
            values: self.values.iter().map(|v| c * v).collect(),
        }
    }

    /// Elementwise combination of two equally shaped tensors.
    pub fn zip_with(&self, other: &Tensor3, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.dims != other.dims {
            return dim_err(format!("tensor dims {:?} vs {:?}", self.dims, other.dims));
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Self {
            dims: self.dims,
            values,
        })
    }

    pub fn add(&self, other: &Tensor3) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor3) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask3 {
    dims: Dims,
    flags: Vec<bool>,
}

impl Mask3 {
    pub fn full(dims: Dims, observed: bool) -> Self {
        Self {
            dims,
            flags: vec![observed; dims.iter().product()],
        }
    }

    pub fn from_flags(dims: Dims, flags: Vec<bool>) -> Result<Self> {
        let len: usize = dims.iter().product();
        if flags.len() != len {
            return dim_err(format!(
                "mask {dims:?} needs {len} flags, got {}",
                flags.len()
            ));
        }
        Ok(Self { dims, flags })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn flags(&self) -> &[bool] {
        &self.flags
    }

    #[inline]
    pub fn is_observed(&self, i: usize, j: usize, k: usize) -> bool {
        self.flags[i + self.dims[0] * (j + self.dims[1] * k)]
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, observed: bool) {
        let idx = i + self.dims[0] * (j + self.dims[1] * k);
        self.flags[idx] = observed;
    }

    pub fn count_observed(&self) -> usize {
        self.flags.iter().filter(|&&f| f).count()
    }

    pub fn complement(&self) -> Self {
        Self {
            dims: self.dims,
            flags: self.flags.iter().map(|f| !f).collect(),
        }
    }
}

/// Which side of a mask a projection keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Keep {
    Observed,
    Unobserved,
}

/// A partially observed tensor. Unobserved entries of `data` are stored as 0.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedTensor {
    data: Tensor3,
    mask: Mask3,
}

impl ObservedTensor {
    /// Pairs values with a mask, zeroing entries the mask marks unobserved.
    pub fn new(data: Tensor3, mask: Mask3) -> Result<Self> {
        let data = mask_project(&data, &mask, Keep::Observed)?;
        Ok(Self { data, mask })
    }

    pub fn fully_observed(data: Tensor3) -> Self {
        let mask = Mask3::full(data.dims(), true);
        Self { data, mask }
    }

    pub fn dims(&self) -> Dims {
        self.data.dims()
    }

    pub fn data(&self) -> &Tensor3 {
        &self.data
    }

    pub fn mask(&self) -> &Mask3 {
        &self.mask
    }
}

/// Mode-`mode` unfolding, shape `(prod of other dims) x I_mode`.
pub fn unfold(t: &Tensor3, mode: usize) -> Matrix {
    let d = t.dims();
    let (p, q) = other_modes(mode);
    let rows = d[p] * d[q];
    let mut out = Matrix::zeros(rows, d[mode]);
    for (idx, &v) in t.values().iter().enumerate() {
        let (i, j, k) = t.position(idx);
        let pos = [i, j, k];
        out[(pos[p] + d[p] * pos[q], pos[mode])] = v;
    }
    out
}

/// Inverse of [`unfold`].
pub fn fold(m: &Matrix, mode: usize, dims: Dims) -> Result<Tensor3> {
    let (p, q) = other_modes(mode);
    if m.nrows() != dims[p] * dims[q] || m.ncols() != dims[mode] {
        return dim_err(format!(
            "cannot fold {}x{} matrix along mode {mode} into {dims:?}",
            m.nrows(),
            m.ncols()
        ));
    }
    Ok(Tensor3::from_fn(dims, |i, j, k| {
        let pos = [i, j, k];
        m[(pos[p] + dims[p] * pos[q], pos[mode])]
    }))
}

/// Column-wise Kronecker product; `x`'s row index varies slowest.
pub fn khatri_rao(x: &Matrix, y: &Matrix) -> Result<Matrix> {
    if x.ncols() != y.ncols() {
        return dim_err(format!(
            "khatri-rao column counts differ: {} vs {}",
            x.ncols(),
            y.ncols()
        ));
    }
    let (xi, yj) = (x.nrows(), y.nrows());
    Ok(Matrix::from_fn(xi * yj, x.ncols(), |row, r| {
        x[(row / yj, r)] * y[(row % yj, r)]
    }))
}

fn check_factors(factors: [&Matrix; 3]) -> Result<usize> {
    let rank = factors[0].ncols();
    if factors.iter().any(|f| f.ncols() != rank) {
        return dim_err(format!(
            "factor ranks differ: {:?}",
            factors.map(|f| f.ncols())
        ));
    }
    Ok(rank)
}

/// CP (PARAFAC) reconstruction `sum_r a0_r ∘ a1_r ∘ a2_r`.
pub fn cp_reconstruct(factors: [&Matrix; 3]) -> Result<Tensor3> {
    let rank = check_factors(factors)?;
    let [a0, a1, a2] = factors;
    let dims = [a0.nrows(), a1.nrows(), a2.nrows()];
    let mut out = Tensor3::zeros(dims);
    let vals = out.values_mut();
    for r in 0..rank {
        let mut idx = 0;
        for k in 0..dims[2] {
            let ck = a2[(k, r)];
            for j in 0..dims[1] {
                let w = ck * a1[(j, r)];
                for i in 0..dims[0] {
                    vals[idx] += w * a0[(i, r)];
                    idx += 1;
                }
            }
        }
    }
    Ok(out)
}

/// Matricized tensor times Khatri-Rao product, `unfold(t, mode)^T * M_mode`,
/// computed without forming the Khatri-Rao matrix. Result is `I_mode x R`.
pub fn mttkrp(t: &Tensor3, factors: [&Matrix; 3], mode: usize) -> Result<Matrix> {
    let rank = check_factors(factors)?;
    let dims = t.dims();
    for (n, f) in factors.iter().enumerate() {
        if n != mode && f.nrows() != dims[n] {
            return dim_err(format!(
                "factor {n} has {} rows, tensor mode has {}",
                f.nrows(),
                dims[n]
            ));
        }
    }
    let (p, q) = other_modes(mode);
    let mut out = Matrix::zeros(dims[mode], rank);
    for (idx, &v) in t.values().iter().enumerate() {
        if v == 0.0 {
            continue;
        }
        let (i, j, k) = t.position(idx);
        let pos = [i, j, k];
        for r in 0..rank {
            out[(pos[mode], r)] += v * factors[p][(pos[p], r)] * factors[q][(pos[q], r)];
        }
    }
    Ok(out)
}

/// Keeps entries on the `keep` side of the mask and zeros the rest.
pub fn mask_project(t: &Tensor3, m: &Mask3, keep: Keep) -> Result<Tensor3> {
    if t.dims() != m.dims() {
        return dim_err(format!("tensor {:?} vs mask {:?}", t.dims(), m.dims()));
    }
    let want = keep == Keep::Observed;
    let values = t
        .values()
        .iter()
        .zip(m.flags())
        .map(|(&v, &f)| if f == want { v } else { 0.0 })
        .collect();
    Tensor3::from_values(t.dims(), values)
}
