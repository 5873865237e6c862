use nalgebra::{DMatrix, DVector};

use crate::error::{dim_err, Result};
use crate::multilinear::{Dims, Matrix, ObservedTensor, Tensor3};

pub type Vector = DVector<f64>;

/// A per-mode similarity graph. `present == false` means the mode has no
/// side information and its fitting term is dropped from the problem.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedGraph {
    values: Matrix,
    mask: DMatrix<bool>,
    present: bool,
}

impl ObservedGraph {
    /// Validates symmetry and nonnegativity of observed entries; unobserved
    /// entries are zeroed.
    pub fn new(mut values: Matrix, mask: DMatrix<bool>) -> Result<Self> {
        let n = values.nrows();
        if values.ncols() != n || mask.shape() != (n, n) {
            return dim_err(format!(
                "graph values {:?} and mask {:?} must be square and equal",
                values.shape(),
                mask.shape()
            ));
        }
        for i in 0..n {
            for j in 0..n {
                if mask[(i, j)] != mask[(j, i)] {
                    return dim_err(format!("graph mask not symmetric at ({i}, {j})"));
                }
                if !mask[(i, j)] {
                    values[(i, j)] = 0.0;
                    continue;
                }
                let v = values[(i, j)];
                if !v.is_finite() || v < 0.0 {
                    return dim_err(format!(
                        "graph entry ({i}, {j}) = {v} is not finite and >= 0"
                    ));
                }
                if v != values[(j, i)] {
                    return dim_err(format!("graph values not symmetric at ({i}, {j})"));
                }
            }
        }
        Ok(Self {
            values,
            mask,
            present: true,
        })
    }

    pub fn fully_observed(values: Matrix) -> Result<Self> {
        let n = values.nrows();
        Self::new(values, DMatrix::from_element(n, n, true))
    }

    /// Placeholder for a mode without a graph.
    pub fn absent(n: usize) -> Self {
        Self {
            values: Matrix::zeros(n, n),
            mask: DMatrix::from_element(n, n, false),
            present: false,
        }
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn mask(&self) -> &DMatrix<bool> {
        &self.mask
    }

    pub fn is_present(&self) -> bool {
        self.present
    }

    pub fn count_observed(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }
}

/// The observed tensor together with one (possibly absent) graph per mode.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledData {
    pub tensor: ObservedTensor,
    pub graphs: [ObservedGraph; 3],
}

impl CoupledData {
    pub fn new(tensor: ObservedTensor, graphs: [ObservedGraph; 3]) -> Result<Self> {
        let dims = tensor.dims();
        if dims.contains(&0) {
            return dim_err(format!("tensor dims {dims:?} must be positive"));
        }
        for (n, g) in graphs.iter().enumerate() {
            if g.n() != dims[n] {
                return dim_err(format!(
                    "graph for mode {n} has {} nodes, tensor mode has {}",
                    g.n(),
                    dims[n]
                ));
            }
        }
        Ok(Self { tensor, graphs })
    }

    /// Tensor only; every mode is graph-free.
    pub fn tensor_only(tensor: ObservedTensor) -> Self {
        let d = tensor.dims();
        let graphs = [
            ObservedGraph::absent(d[0]),
            ObservedGraph::absent(d[1]),
            ObservedGraph::absent(d[2]),
        ];
        Self { tensor, graphs }
    }

    pub fn dims(&self) -> Dims {
        self.tensor.dims()
    }
}

/// Per-mode factors `A_n` (`I_n x R`) and diagonal weights `d_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorModel {
    pub factors: [Matrix; 3],
    pub weights: [Vector; 3],
}

impl FactorModel {
    pub fn new(factors: [Matrix; 3], weights: [Vector; 3]) -> Result<Self> {
        let rank = factors[0].ncols();
        if rank == 0 {
            return dim_err("rank must be at least 1");
        }
        if factors.iter().any(|f| f.ncols() != rank) || weights.iter().any(|w| w.len() != rank) {
            return dim_err("factor and weight ranks differ");
        }
        Ok(Self { factors, weights })
    }

    pub fn rank(&self) -> usize {
        self.factors[0].ncols()
    }

    pub fn dims(&self) -> Dims {
        [
            self.factors[0].nrows(),
            self.factors[1].nrows(),
            self.factors[2].nrows(),
        ]
    }

    pub fn factor_refs(&self) -> [&Matrix; 3] {
        [&self.factors[0], &self.factors[1], &self.factors[2]]
    }

    pub fn reconstruct(&self) -> Tensor3 {
        crate::multilinear::cp_reconstruct(self.factor_refs())
            .expect("ranks checked at construction")
    }

    /// `A_n diag(d_n) A_n^T`.
    pub fn graph(&self, mode: usize) -> Matrix {
        let a = &self.factors[mode];
        let ad = scale_columns(a, &self.weights[mode]);
        &ad * a.transpose()
    }

    /// Copy with all negative entries set to 0.
    pub fn clamped(&self) -> Self {
        Self {
            factors: self.factors.clone().map(|f| f.map(|v| v.max(0.0))),
            weights: self.weights.clone().map(|w| w.map(|v| v.max(0.0))),
        }
    }
}

/// `a * diag(d)`.
pub(crate) fn scale_columns(a: &Matrix, d: &Vector) -> Matrix {
    let mut out = a.clone();
    for (r, mut col) in out.column_iter_mut().enumerate() {
        col *= d[r];
    }
    out
}

/// ADMM penalty parameters, shared by all modes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Penalties {
    pub bar: f64,
    pub tilde: f64,
    pub weights: f64,
}

impl Penalties {
    pub fn uniform(rho: f64) -> Self {
        Self {
            bar: rho,
            tilde: rho,
            weights: rho,
        }
    }
}

/// Full ADMM iterate: primal blocks, auxiliary copies and multipliers.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmmState {
    pub primal: FactorModel,
    pub factors_bar: [Matrix; 3],
    pub factors_tilde: [Matrix; 3],
    pub weights_tilde: [Vector; 3],
    pub dual_bar: [Matrix; 3],
    pub dual_tilde: [Matrix; 3],
    pub dual_weights: [Vector; 3],
    pub penalties: Penalties,
    pub mu: f64,
    pub iteration: usize,
}

impl AdmmState {
    /// Starts from `primal` with feasible auxiliaries and zero multipliers.
    pub fn from_primal(primal: FactorModel, penalties: Penalties, mu: f64) -> Self {
        let factors_bar = primal.factors.clone();
        let factors_tilde = primal.factors.clone().map(|f| f.map(|v| v.max(0.0)));
        let weights_tilde = primal.weights.clone().map(|w| w.map(|v| v.max(0.0)));
        let dual_bar = primal
            .factors
            .clone()
            .map(|f| Matrix::zeros(f.nrows(), f.ncols()));
        let dual_tilde = dual_bar.clone();
        let dual_weights = primal.weights.clone().map(|w| Vector::zeros(w.len()));
        Self {
            primal,
            factors_bar,
            factors_tilde,
            weights_tilde,
            dual_bar,
            dual_tilde,
            dual_weights,
            penalties,
            mu,
            iteration: 0,
        }
    }

    pub fn is_finite(&self) -> bool {
        let mats = self
            .primal
            .factors
            .iter()
            .chain(&self.factors_bar)
            .chain(&self.factors_tilde)
            .chain(&self.dual_bar)
            .chain(&self.dual_tilde);
        let vecs = self
            .primal
            .weights
            .iter()
            .chain(&self.weights_tilde)
            .chain(&self.dual_weights);
        mats.flat_map(|m| m.iter())
            .chain(vecs.flat_map(|v| v.iter()))
            .all(|v| v.is_finite())
    }
}

/// Working completions: observed entries plus the current imputations.
/// `graphs[n]` is `None` for graph-free modes.
#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub tensor: Tensor3,
    pub graphs: [Option<Matrix>; 3],
}

impl Completion {
    pub fn has_graph(&self, mode: usize) -> bool {
        self.graphs[mode].is_some()
    }
}
