//! Closed-form ADMM block updates. Each update is the exact minimizer of the
//! augmented Lagrangian in its own block with all other blocks held fixed.

use nalgebra::Cholesky;

use super::model::{scale_columns, AdmmState, Completion, CoupledData, ObservedGraph, Vector};
use crate::multilinear::{mask_project, mttkrp, other_modes, Keep, Matrix, Tensor3};

/// Solves `lhs * x = rhs` for symmetric positive definite `lhs`. If the
/// factorization fails, jitter `1e-10 * trace / R` is added to the diagonal
/// (growing tenfold per retry).
pub(crate) fn solve_spd(lhs: &Matrix, rhs: &Matrix) -> Matrix {
    let r = lhs.nrows();
    let base = (1e-10 * lhs.trace().abs() / r as f64).max(f64::MIN_POSITIVE);
    let mut jitter = 0.0;
    for _ in 0..12 {
        let mut m = lhs.clone();
        for i in 0..r {
            m[(i, i)] += jitter;
        }
        if let Some(ch) = Cholesky::new(m) {
            return ch.solve(rhs);
        }
        jitter = if jitter == 0.0 { base } else { jitter * 10.0 };
    }
    // Only reachable for non-finite systems; the divergence guard reports it.
    Matrix::from_element(rhs.nrows(), rhs.ncols(), f64::NAN)
}

/// Solves `x * lhs = rhs` for symmetric `lhs` (row-wise right division).
fn solve_right(lhs: &Matrix, rhs: &Matrix) -> Matrix {
    solve_spd(lhs, &rhs.transpose()).transpose()
}

fn add_diagonal(m: &mut Matrix, v: f64) {
    for i in 0..m.nrows() {
        m[(i, i)] += v;
    }
}

/// Gram matrix of the Khatri-Rao product of the two other factors,
/// `M_n^T M_n = (A_p^T A_p) * (A_q^T A_q)` (Hadamard).
fn khatri_rao_gram(factors: &[Matrix; 3], mode: usize) -> Matrix {
    let (p, q) = other_modes(mode);
    let gp = factors[p].transpose() * &factors[p];
    let gq = factors[q].transpose() * &factors[q];
    gp.component_mul(&gq)
}

/// New `A_n`. Graph-free modes drop the graph fit and the `A_n = Ā_n`
/// coupling.
pub fn update_factor(state: &AdmmState, work: &Completion, mode: usize) -> Matrix {
    let a = &state.primal.factors;
    let rho = state.penalties;
    let refs = [&a[0], &a[1], &a[2]];
    let mut rhs = mttkrp(&work.tensor, refs, mode).expect("state shapes are consistent");
    let mut lhs = khatri_rao_gram(a, mode);
    rhs += state.penalties.tilde * &state.factors_tilde[mode] - &state.dual_tilde[mode];
    add_diagonal(&mut lhs, rho.tilde);

    if let Some(g) = &work.graphs[mode] {
        let d = &state.primal.weights[mode];
        let bar_d = scale_columns(&state.factors_bar[mode], d);
        lhs += state.mu * bar_d.transpose() * &bar_d;
        rhs += state.mu * g * &bar_d;
        rhs += rho.bar * &state.factors_bar[mode] - &state.dual_bar[mode];
        add_diagonal(&mut lhs, rho.bar);
    }
    solve_right(&lhs, &rhs)
}

/// New `d_n`, or the current one for graph-free modes.
pub fn update_weights(state: &AdmmState, work: &Completion, mode: usize) -> Vector {
    let Some(g) = &work.graphs[mode] else {
        return state.primal.weights[mode].clone();
    };
    let a = &state.primal.factors[mode];
    let bar = &state.factors_bar[mode];
    let rho = state.penalties.weights;
    // (Ā ⊙ A)^T (Ā ⊙ A) = (Ā^T Ā) * (A^T A); (Ā ⊙ A)^T vec(G) = diag(A^T G Ā)
    let mut lhs = state.mu * (bar.transpose() * bar).component_mul(&(a.transpose() * a));
    add_diagonal(&mut lhs, rho);
    let cross = a.transpose() * g * bar;
    let rhs = Vector::from_fn(a.ncols(), |r, _| {
        state.mu * cross[(r, r)] + rho * state.weights_tilde[mode][r] - state.dual_weights[mode][r]
    });
    let rhs = Matrix::from_column_slice(rhs.len(), 1, rhs.as_slice());
    Vector::from_column_slice(solve_spd(&lhs, &rhs).as_slice())
}

/// New `Ā_n`; equals `A_n` for graph-free modes.
pub fn update_factor_bar(state: &AdmmState, work: &Completion, mode: usize) -> Matrix {
    let a = &state.primal.factors[mode];
    let Some(g) = &work.graphs[mode] else {
        return a.clone();
    };
    let rho = state.penalties.bar;
    let ad = scale_columns(a, &state.primal.weights[mode]);
    let mut lhs = state.mu * ad.transpose() * &ad;
    add_diagonal(&mut lhs, rho);
    let rhs = state.mu * g.transpose() * &ad + rho * a + &state.dual_bar[mode];
    solve_right(&lhs, &rhs)
}

/// Projection of the auxiliary copies onto the nonnegative orthant.
pub fn project_nonneg(state: &AdmmState, mode: usize) -> (Matrix, Vector) {
    let rho = state.penalties;
    let a = &state.primal.factors[mode];
    let tilde = a.zip_map(&state.dual_tilde[mode], |v, y| (v + y / rho.tilde).max(0.0));
    let d = &state.primal.weights[mode];
    let d_tilde = d.zip_map(&state.dual_weights[mode], |v, y| {
        (v + y / rho.weights).max(0.0)
    });
    (tilde, d_tilde)
}

/// CP reconstruction restricted to the unobserved tensor entries.
pub fn impute_tensor(state: &AdmmState, data: &CoupledData) -> Tensor3 {
    let recon = state.primal.reconstruct();
    mask_project(&recon, data.tensor.mask(), Keep::Unobserved).expect("dims checked")
}

/// Symmetrized `A diag(d) Ā^T` on the unobserved graph entries, zero elsewhere.
pub fn impute_graph(state: &AdmmState, graph: &ObservedGraph, mode: usize) -> Matrix {
    let ad = scale_columns(&state.primal.factors[mode], &state.primal.weights[mode]);
    let s = &ad * state.factors_bar[mode].transpose();
    let mask = graph.mask();
    Matrix::from_fn(s.nrows(), s.ncols(), |i, j| {
        if mask[(i, j)] {
            0.0
        } else {
            0.5 * (s[(i, j)] + s[(j, i)])
        }
    })
}

/// Norms of the multiplier increments of one mode.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BlockNorms {
    pub bar: f64,
    pub tilde: f64,
    pub weights: f64,
}

impl BlockNorms {
    pub fn max(&self) -> f64 {
        self.bar.max(self.tilde).max(self.weights)
    }
}

/// Multiplier ascent step for every mode; returns the increment norms.
pub fn update_duals(state: &mut AdmmState) -> [BlockNorms; 3] {
    let rho = state.penalties;
    std::array::from_fn(|n| {
        let a = &state.primal.factors[n];
        let inc_bar = rho.bar * (a - &state.factors_bar[n]);
        let inc_tilde = rho.tilde * (a - &state.factors_tilde[n]);
        let inc_w = rho.weights * (&state.primal.weights[n] - &state.weights_tilde[n]);
        state.dual_bar[n] += &inc_bar;
        state.dual_tilde[n] += &inc_tilde;
        state.dual_weights[n] += &inc_w;
        BlockNorms {
            bar: inc_bar.norm(),
            tilde: inc_tilde.norm(),
            weights: inc_w.norm(),
        }
    })
}

/// `||A_n - Ā_n||_F`, `||A_n - Ã_n||_F`, `||d_n - d̃_n||_2` per mode.
pub fn primal_gaps(state: &AdmmState) -> [BlockNorms; 3] {
    std::array::from_fn(|n| {
        let a = &state.primal.factors[n];
        BlockNorms {
            bar: (a - &state.factors_bar[n]).norm(),
            tilde: (a - &state.factors_tilde[n]).norm(),
            weights: (&state.primal.weights[n] - &state.weights_tilde[n]).norm(),
        }
    })
}

/// Auxiliary blocks of an iterate, kept to measure per-sweep movement.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxSnapshot {
    pub bar: [Matrix; 3],
    pub tilde: [Matrix; 3],
    pub weights: [Vector; 3],
}

impl AuxSnapshot {
    pub fn of(state: &AdmmState) -> Self {
        Self {
            bar: state.factors_bar.clone(),
            tilde: state.factors_tilde.clone(),
            weights: state.weights_tilde.clone(),
        }
    }
}

/// ADMM dual residuals `rho * ||Z^k - Z^(k-1)||` of every auxiliary block.
pub fn dual_residuals(prev: &AuxSnapshot, state: &AdmmState) -> [BlockNorms; 3] {
    let rho = state.penalties;
    std::array::from_fn(|n| BlockNorms {
        bar: rho.bar * (&state.factors_bar[n] - &prev.bar[n]).norm(),
        tilde: rho.tilde * (&state.factors_tilde[n] - &prev.tilde[n]).norm(),
        weights: rho.weights * (&state.weights_tilde[n] - &prev.weights[n]).norm(),
    })
}
