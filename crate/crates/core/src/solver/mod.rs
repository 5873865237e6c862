//! ADMM solver for coupled graph-tensor factorization.
//!
//! The tensor follows a rank-`R` CP model and each present per-mode graph a
//! diagonally scaled symmetric NMF model sharing the same factor:
//!
//! ```text
//! X   ≈ [[A_1, A_2, A_3]]
//! G_n ≈ A_n diag(d_n) A_n^T,      A_n >= 0, d_n >= 0
//! ```
//!
//! The symmetric product is split with auxiliary copies `Ā_n` and the sign
//! constraints with `Ã_n`, `d̃_n`, so that every block update has a closed
//! form. Missing tensor and graph entries are re-imputed from the factors
//! after each sweep.

mod diagnostics;
mod init;
mod model;
mod updates;

pub use diagnostics::{augmented_lagrangian, kkt_residual, objective};
pub use init::{align_components, random_factor, rescale_to_data, snmf_init, SNMF_ITERS};
pub use model::{
    AdmmState, Completion, CoupledData, FactorModel, ObservedGraph, Penalties, Vector,
};
pub use updates::{
    dual_residuals, impute_graph, impute_tensor, primal_gaps, project_nonneg, update_duals,
    update_factor, update_factor_bar, update_weights, AuxSnapshot, BlockNorms,
};

use crate::error::{Error, Result};
use crate::multilinear::{Matrix, Tensor3};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitStrategy {
    /// SNMF of each present graph; random for graph-free modes.
    Snmf,
    Random,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub rank: usize,
    pub mu: f64,
    pub rho: f64,
    pub max_iters: usize,
    pub tol_primal: f64,
    pub tol_dual: f64,
    pub seed: u64,
    pub init: InitStrategy,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            rank: 1,
            mu: 1.0,
            rho: 100.0,
            max_iters: 1000,
            tol_primal: 1e-6,
            tol_dual: 1e-6,
            seed: 0,
            init: InitStrategy::Snmf,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.rank == 0 {
            return bad("rank must be >= 1");
        }
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return bad("mu must be finite and >= 0");
        }
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return bad("rho must be finite and > 0");
        }
        if !(self.tol_primal > 0.0 && self.tol_dual > 0.0) {
            return bad("tolerances must be > 0");
        }
        Ok(())
    }
}

/// Diagnostics of one ADMM sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    /// Raw primal gaps per mode.
    pub primal: [BlockNorms; 3],
    /// Raw multiplier increments per mode.
    pub dual: [BlockNorms; 3],
    /// Raw ADMM dual residuals `rho * ||Z^k - Z^(k-1)||` of the auxiliary blocks.
    pub aux_change: [BlockNorms; 3],
    /// Largest gap normalized by `1 + ||A_n||_F` (or `1 + ||d_n||_2`).
    pub max_primal: f64,
    /// Largest multiplier increment or dual residual, normalized the same way.
    pub max_dual: f64,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub iterations: usize,
    pub history: Vec<IterationRecord>,
    pub objective: f64,
    pub kkt_residual: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    /// Clamped to be nonnegative.
    pub model: FactorModel,
    /// Raw final iterate, for diagnostics.
    pub state: AdmmState,
    /// Observed entries plus imputations from `model`.
    pub tensor: Tensor3,
    /// Observed links plus imputations from `model`, `None` for graph-free modes.
    pub graphs: [Option<Matrix>; 3],
    pub report: FitReport,
}

fn normalized(norms: &[BlockNorms; 3], state: &AdmmState) -> f64 {
    (0..3)
        .map(|n| {
            let a = 1.0 + state.primal.factors[n].norm();
            let d = 1.0 + state.primal.weights[n].norm();
            (norms[n].bar / a)
                .max(norms[n].tilde / a)
                .max(norms[n].weights / d)
        })
        .fold(0.0, f64::max)
}

/// Steppable solver. [`fit`] runs it to termination.
#[derive(Debug, Clone)]
pub struct Solver<'a> {
    data: &'a CoupledData,
    config: SolverConfig,
    state: AdmmState,
    work: Completion,
}

impl<'a> Solver<'a> {
    /// Initializes factors (SNMF or random), aligns the component order of
    /// independently factored graphs against the observed tensor, sets `d_n = 1`, auxiliaries
    /// equal to the (projected) primal blocks, zero multipliers, and fills
    /// the working completions from the initial factors.
    pub fn new(data: &'a CoupledData, config: SolverConfig) -> Result<Self> {
        config.validate()?;
        let dims = data.dims();
        let rank = config.rank;
        let mut random_modes = Vec::new();
        let mut factors: [Matrix; 3] = std::array::from_fn(|_| Matrix::zeros(0, 0));
        for n in 0..3 {
            let g = &data.graphs[n];
            let s = seed::indexed_seed(config.seed, "init", n as u64);
            factors[n] = if config.init == InitStrategy::Snmf && g.is_present() {
                snmf_init(g, rank, s)?
            } else {
                random_modes.push(n);
                random_factor(dims[n], rank, s)
            };
        }
        if random_modes.len() < 2 {
            align_components(&mut factors, &data.tensor);
        }
        rescale_to_data(&mut factors, &random_modes, &data.tensor);
        let weights = std::array::from_fn(|_| Vector::from_element(rank, 1.0));
        let primal = FactorModel::new(factors, weights)?;
        let state = AdmmState::from_primal(primal, Penalties::uniform(config.rho), config.mu);

        let mut work = Completion {
            tensor: data.tensor.data().clone(),
            graphs: std::array::from_fn(|n| {
                data.graphs[n]
                    .is_present()
                    .then(|| data.graphs[n].values().clone())
            }),
        };
        refresh_completion(&state, data, &mut work);
        Ok(Self {
            data,
            config,
            state,
            work,
        })
    }

    pub fn state(&self) -> &AdmmState {
        &self.state
    }

    pub fn completion(&self) -> &Completion {
        &self.work
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    /// One full ADMM sweep.
    pub fn step(&mut self) -> Result<IterationRecord> {
        let st = &mut self.state;
        let prev = AuxSnapshot::of(st);
        for n in 0..3 {
            st.primal.factors[n] = update_factor(st, &self.work, n);
        }
        for n in 0..3 {
            st.primal.weights[n] = update_weights(st, &self.work, n);
        }
        for n in 0..3 {
            st.factors_bar[n] = update_factor_bar(st, &self.work, n);
        }
        for n in 0..3 {
            let (tilde, d_tilde) = project_nonneg(st, n);
            st.factors_tilde[n] = tilde;
            st.weights_tilde[n] = d_tilde;
        }
        refresh_completion(st, self.data, &mut self.work);
        let primal = primal_gaps(st);
        let aux_change = dual_residuals(&prev, st);
        let dual = update_duals(st);
        st.iteration += 1;
        if !st.is_finite() || !self.work.tensor.is_finite() {
            return Err(Error::Diverged {
                iteration: st.iteration,
            });
        }
        Ok(IterationRecord {
            max_primal: normalized(&primal, st),
            max_dual: normalized(&dual, st).max(normalized(&aux_change, st)),
            primal,
            dual,
            aux_change,
            objective: objective(&st.primal, &self.work, st.mu),
        })
    }

    /// Iterates until both normalized residuals are below tolerance or
    /// `max_iters` sweeps have run.
    pub fn run(mut self) -> Result<FitResult> {
        let mut history = Vec::new();
        let mut converged = false;
        while history.len() < self.config.max_iters {
            let rec = self.step()?;
            let done =
                rec.max_primal < self.config.tol_primal && rec.max_dual < self.config.tol_dual;
            history.push(rec);
            if done {
                converged = true;
                break;
            }
        }
        let report = FitReport {
            iterations: history.len(),
            objective: objective(&self.state.primal, &self.work, self.state.mu),
            kkt_residual: kkt_residual(&self.state, &self.work),
            history,
            converged,
        };
        let model = self.state.primal.clamped();
        let exported = AdmmState::from_primal(model.clone(), self.state.penalties, self.state.mu);
        let mut completion = self.work;
        refresh_completion(&exported, self.data, &mut completion);
        Ok(FitResult {
            model,
            tensor: completion.tensor,
            graphs: completion.graphs,
            state: self.state,
            report,
        })
    }
}

fn refresh_completion(state: &AdmmState, data: &CoupledData, work: &mut Completion) {
    work.tensor = data
        .tensor
        .data()
        .add(&impute_tensor(state, data))
        .expect("dims checked");
    for n in 0..3 {
        if let Some(g) = work.graphs[n].as_mut() {
            *g = data.graphs[n].values() + impute_graph(state, &data.graphs[n], n);
        }
    }
}

/// Runs the solver from initialization to termination.
pub fn fit(data: &CoupledData, config: &SolverConfig) -> Result<FitResult> {
    Solver::new(data, config.clone())?.run()
}
