use cgtf_core::multilinear::{
    cp_reconstruct, mask_project, Keep, Mask3, Matrix, ObservedTensor, Tensor3,
};
use cgtf_core::solver::*;
use cgtf_core::synthgen::{generate, SynthSpec};
use cgtf_core::Error;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rand_mat(rng: &mut ChaCha8Rng, r: usize, c: usize, lo: f64, hi: f64) -> Matrix {
    Matrix::from_fn(r, c, |_, _| rng.random_range(lo..hi))
}

fn rand_vec(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vector {
    Vector::from_fn(n, |_, _| rng.random_range(lo..hi))
}

fn rand_sym(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
    let m = rand_mat(rng, n, n, 0.0, 1.0);
    (&m + m.transpose()) * 0.5
}

/// Random iterate and working completions; `present[n]` decides whether
/// mode `n` carries a graph.
fn random_instance(seed: u64, present: [bool; 3]) -> (AdmmState, Completion) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = [
        rng.random_range(2..=6),
        rng.random_range(2..=6),
        rng.random_range(2..=6),
    ];
    let rank = rng.random_range(1..=3);
    let factors = dims.map(|d| rand_mat(&mut rng, d, rank, -0.2, 1.0));
    let weights = std::array::from_fn(|_| rand_vec(&mut rng, rank, 0.2, 1.5));
    let primal = FactorModel::new(factors, weights).unwrap();
    let mut st = AdmmState::from_primal(
        primal,
        Penalties::uniform(rng.random_range(0.5..5.0)),
        rng.random_range(0.1..2.0),
    );
    for n in 0..3 {
        st.factors_bar[n] = rand_mat(&mut rng, dims[n], rank, -0.2, 1.0);
        st.factors_tilde[n] = rand_mat(&mut rng, dims[n], rank, 0.0, 1.0);
        st.weights_tilde[n] = rand_vec(&mut rng, rank, 0.0, 1.0);
        st.dual_bar[n] = rand_mat(&mut rng, dims[n], rank, -0.5, 0.5);
        st.dual_tilde[n] = rand_mat(&mut rng, dims[n], rank, -0.5, 0.5);
        st.dual_weights[n] = rand_vec(&mut rng, rank, -0.5, 0.5);
        if !present[n] {
            st.factors_bar[n] = st.primal.factors[n].clone();
            st.dual_bar[n].fill(0.0);
        }
    }
    let tensor = Tensor3::from_fn(dims, |_, _, _| rng.random_range(0.0..2.0));
    let graphs = std::array::from_fn(|n| present[n].then(|| rand_sym(&mut rng, dims[n])));
    (st, Completion { tensor, graphs })
}

enum Block {
    Factor,
    Weights,
    FactorBar,
}

fn block_len(st: &AdmmState, n: usize, b: &Block) -> usize {
    match b {
        Block::Factor => st.primal.factors[n].len(),
        Block::Weights => st.primal.weights[n].len(),
        Block::FactorBar => st.factors_bar[n].len(),
    }
}

fn entry<'a>(st: &'a mut AdmmState, n: usize, b: &Block, idx: usize) -> &'a mut f64 {
    match b {
        Block::Factor => &mut st.primal.factors[n].as_mut_slice()[idx],
        Block::Weights => &mut st.primal.weights[n].as_mut_slice()[idx],
        Block::FactorBar => &mut st.factors_bar[n].as_mut_slice()[idx],
    }
}

/// Central finite differences of the augmented Lagrangian in one block.
fn fd_gradient(st: &AdmmState, work: &Completion, n: usize, b: &Block) -> Vec<f64> {
    let h = 1e-5;
    (0..block_len(st, n, b))
        .map(|idx| {
            let mut plus = st.clone();
            *entry(&mut plus, n, b, idx) += h;
            let mut minus = st.clone();
            *entry(&mut minus, n, b, idx) -= h;
            (augmented_lagrangian(&plus, work) - augmented_lagrangian(&minus, work)) / (2.0 * h)
        })
        .collect()
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn check_stationary(seed: u64, present: [bool; 3]) {
    let (st, work) = random_instance(seed, present);
    for n in 0..3 {
        for b in [Block::Factor, Block::Weights, Block::FactorBar] {
            if !present[n] && !matches!(b, Block::Factor) {
                continue;
            }
            let before = max_abs(&fd_gradient(&st, &work, n, &b));
            let mut next = st.clone();
            match b {
                Block::Factor => next.primal.factors[n] = update_factor(&st, &work, n),
                Block::Weights => next.primal.weights[n] = update_weights(&st, &work, n),
                Block::FactorBar => next.factors_bar[n] = update_factor_bar(&st, &work, n),
            }
            let after = max_abs(&fd_gradient(&next, &work, n, &b));
            assert!(
                after < 1e-5 * (1.0 + before),
                "seed {seed} mode {n}: {after} vs {before}"
            );
        }
    }
}

#[test]
fn block_updates_are_stationary() {
    for seed in 0..10 {
        check_stationary(seed, [true; 3]);
    }
}

#[test]
fn graph_free_factor_update_is_stationary() {
    for seed in 100..105 {
        check_stationary(seed, [false, true, false]);
        check_stationary(seed + 50, [false; 3]);
    }
}

#[test]
fn factor_update_proximal_limit() {
    let (mut st, work) = random_instance(7, [true; 3]);
    st.penalties = Penalties::uniform(1e12);
    for n in 0..3 {
        st.dual_bar[n].fill(0.0);
        st.dual_tilde[n].fill(0.0);
        st.factors_tilde[n] = st.factors_bar[n].map(|v| v.abs());
        st.factors_bar[n] = st.factors_tilde[n].clone();
        let a = update_factor(&st, &work, n);
        let rel = (&a - &st.factors_bar[n]).norm() / st.factors_bar[n].norm();
        assert!(rel < 1e-6, "mode {n}: {rel}");
    }
}

/// State sitting at the generating factors of a noiseless, fully observed
/// problem, with zero multipliers and consistent auxiliaries.
fn exact_state(seed: u64, rank: usize) -> (AdmmState, Completion, CoupledData) {
    let ds = generate(&SynthSpec::new([5, 4, 6], rank, seed)).unwrap();
    let mut st = AdmmState::from_primal(ds.truth.model.clone(), Penalties::uniform(100.0), 1.0);
    st.iteration = 0;
    let work = Completion {
        tensor: ds.tensor_clean.clone(),
        graphs: ds.graphs_full.clone().map(Some),
    };
    (st, work, ds.data)
}

#[test]
fn exact_factors_are_fixed_points() {
    let (st, work, _) = exact_state(3, 2);
    for n in 0..3 {
        let a = update_factor(&st, &work, n);
        assert!((&a - &st.primal.factors[n]).norm() < 1e-10 * (1.0 + a.norm()));
        let bar = update_factor_bar(&st, &work, n);
        assert!((&bar - &st.factors_bar[n]).norm() < 1e-10 * (1.0 + bar.norm()));
        let d = update_weights(&st, &work, n);
        assert!((&d - &st.primal.weights[n]).norm() < 1e-10);
    }
}

#[test]
fn weights_update_special_cases() {
    let (mut st, work) = random_instance(11, [true; 3]);
    st.mu = 0.0;
    for n in 0..3 {
        st.dual_weights[n].fill(0.0);
        assert!((update_weights(&st, &work, n) - &st.weights_tilde[n]).amax() < 1e-14);
    }

    // consistent least squares: G = A diag(d*) Ā^T with a large mu / rho ratio
    let (mut st, mut work) = random_instance(12, [true; 3]);
    st.mu = 1e10;
    st.penalties = Penalties::uniform(1.0);
    let target = Vector::from_vec(
        (0..st.primal.weights[0].len())
            .map(|r| 0.5 + r as f64)
            .collect(),
    );
    for n in 0..3 {
        st.dual_weights[n].fill(0.0);
        let a = &st.primal.factors[n];
        let bar = &st.factors_bar[n];
        let mut ad = a.clone();
        for (r, mut col) in ad.column_iter_mut().enumerate() {
            col *= target[r];
        }
        work.graphs[n] = Some(&ad * bar.transpose());
        let d = update_weights(&st, &work, n);
        assert!((&d - &target).amax() < 1e-6, "mode {n}: {d} vs {target}");
    }
}

#[test]
fn factor_bar_with_zero_mu_returns_factor() {
    let (mut st, work) = random_instance(13, [true; 3]);
    st.mu = 0.0;
    for n in 0..3 {
        st.dual_bar[n].fill(0.0);
        let bar = update_factor_bar(&st, &work, n);
        assert!((&bar - &st.primal.factors[n]).norm() < 1e-14);
    }
    let (st, work) = random_instance(14, [false, true, true]);
    assert_eq!(update_factor_bar(&st, &work, 0), st.primal.factors[0]);
}

#[test]
fn projection_cases() {
    let (mut st, _) = random_instance(15, [true; 3]);
    for n in 0..3 {
        st.dual_tilde[n].fill(0.0);
        st.dual_weights[n].fill(0.0);
    }
    st.primal.factors[0] = st.primal.factors[0].map(|v| v.abs());
    let (t, _) = project_nonneg(&st, 0);
    assert_eq!(t, st.primal.factors[0]);

    st.primal.factors[1].fill(-1.0);
    let (t, _) = project_nonneg(&st, 1);
    assert!(t.iter().all(|&v| v == 0.0));

    let (st, _) = random_instance(16, [true; 3]);
    for n in 0..3 {
        let (t, dt) = project_nonneg(&st, n);
        let rho = st.penalties;
        for (idx, &v) in t.iter().enumerate() {
            let raw =
                st.primal.factors[n].as_slice()[idx] + st.dual_tilde[n].as_slice()[idx] / rho.tilde;
            assert_eq!(v, if raw > 0.0 { raw } else { 0.0 });
        }
        for (r, &v) in dt.iter().enumerate() {
            let raw = st.primal.weights[n][r] + st.dual_weights[n][r] / rho.weights;
            assert_eq!(v, if raw > 0.0 { raw } else { 0.0 });
        }
    }
}

#[test]
fn imputation_cases() {
    let (st, _, data) = exact_state(4, 2);
    let dims = data.dims();
    let recon = st.primal.reconstruct();

    assert_eq!(impute_tensor(&st, &data), Tensor3::zeros(dims));

    let empty = ObservedTensor::new(Tensor3::zeros(dims), Mask3::full(dims, false)).unwrap();
    let missing = CoupledData::new(empty, data.graphs.clone()).unwrap();
    assert_eq!(impute_tensor(&st, &missing), recon);

    let half = Mask3::from_flags(dims, (0..recon.len()).map(|i| i % 2 == 0).collect()).unwrap();
    let obs = ObservedTensor::new(recon.clone(), half.clone()).unwrap();
    let halved = CoupledData::new(obs, data.graphs.clone()).unwrap();
    let filled = halved
        .tensor
        .data()
        .add(&impute_tensor(&st, &halved))
        .unwrap();
    assert!(filled.sub(&recon).unwrap().norm() < 1e-14);
    assert_eq!(
        mask_project(&impute_tensor(&st, &halved), &half, Keep::Observed).unwrap(),
        Tensor3::zeros(dims)
    );

    // graphs
    let g_full = &data.graphs[0];
    assert_eq!(
        impute_graph(&st, g_full, 0),
        Matrix::zeros(dims[0], dims[0])
    );
    let none = ObservedGraph::new(
        Matrix::zeros(dims[0], dims[0]),
        DMatrix::from_element(dims[0], dims[0], false),
    )
    .unwrap();
    let s = st.primal.graph(0);
    let s = (&s + s.transpose()) * 0.5;
    assert!((impute_graph(&st, &none, 0) - &s).norm() < 1e-14);
    let mask = DMatrix::from_fn(dims[0], dims[0], |i, j| (i + j) % 2 == 0);
    let part = ObservedGraph::new(s.clone(), mask).unwrap();
    assert!((part.values() + impute_graph(&st, &part, 0) - &s).norm() < 1e-14);
}

#[test]
fn imputed_graph_is_symmetrized() {
    let (mut st, _) = random_instance(17, [true; 3]);
    st.factors_bar[0] = st.factors_bar[0].map(|v| v + 0.3);
    let n = st.primal.factors[0].nrows();
    let none = ObservedGraph::new(Matrix::zeros(n, n), DMatrix::from_element(n, n, false)).unwrap();
    let g = impute_graph(&st, &none, 0);
    assert_eq!(g, g.transpose());
}

#[test]
fn dual_update_cases() {
    let (st, _, _) = exact_state(5, 2);
    let mut same = st.clone();
    let inc = update_duals(&mut same);
    assert_eq!(same, st);
    assert!(inc.iter().all(|b| b.max() == 0.0));

    let mut gap = st.clone();
    gap.factors_bar[0] = &gap.primal.factors[0] - Matrix::from_element(5, 2, 1.0);
    let mut moved = gap.clone();
    update_duals(&mut moved);
    assert!(moved.dual_bar[0].iter().all(|&v| (v - 100.0).abs() < 1e-12));

    let (st, _) = random_instance(18, [true; 3]);
    let mut next = st.clone();
    update_duals(&mut next);
    let rho = st.penalties;
    for n in 0..3 {
        let want = &st.dual_bar[n] + rho.bar * (&st.primal.factors[n] - &st.factors_bar[n]);
        assert!((&next.dual_bar[n] - want).norm() < 1e-14);
        let want = &st.dual_tilde[n] + rho.tilde * (&st.primal.factors[n] - &st.factors_tilde[n]);
        assert!((&next.dual_tilde[n] - want).norm() < 1e-14);
        let want =
            &st.dual_weights[n] + rho.weights * (&st.primal.weights[n] - &st.weights_tilde[n]);
        assert!((&next.dual_weights[n] - want).norm() < 1e-14);
    }
}

#[test]
fn kkt_at_exact_solution_and_random_point() {
    let (st, work, _) = exact_state(6, 3);
    assert!(kkt_residual(&st, &work) < 1e-8);
    let (st, work) = random_instance(19, [true; 3]);
    assert!(kkt_residual(&st, &work) > 0.0);
}

#[test]
fn objective_cases() {
    let (st, work, _) = exact_state(8, 2);
    assert!(objective(&st.primal, &work, 1.0) < 1e-20);

    let (st, work) = random_instance(20, [true, false, true]);
    let model = &st.primal;
    let recon = cp_reconstruct(model.factor_refs()).unwrap();
    let dims = work.tensor.dims();
    let mut tensor_term = 0.0;
    for k in 0..dims[2] {
        for j in 0..dims[1] {
            for i in 0..dims[0] {
                tensor_term += (work.tensor.get(i, j, k) - recon.get(i, j, k)).powi(2);
            }
        }
    }
    let mut graph_term = 0.0;
    for n in [0, 2] {
        let g = work.graphs[n].as_ref().unwrap();
        let (a, d) = (&model.factors[n], &model.weights[n]);
        for i in 0..g.nrows() {
            for j in 0..g.ncols() {
                let s: f64 = (0..d.len()).map(|r| a[(i, r)] * d[r] * a[(j, r)]).sum();
                graph_term += (g[(i, j)] - s).powi(2);
            }
        }
    }
    let got = objective(model, &work, 0.7);
    assert!((got - (tensor_term + 0.7 * graph_term)).abs() < 1e-10 * got);
    assert!((objective(model, &work, 0.0) - tensor_term).abs() < 1e-10 * tensor_term);
}

fn small_spec(seed: u64) -> SynthSpec {
    let mut spec = SynthSpec::new([12, 10, 8], 2, seed);
    spec.tensor_missing = 0.2;
    spec
}

#[test]
fn fit_recovers_noiseless_small_instance() {
    let ds = generate(&small_spec(3)).unwrap();
    let cfg = SolverConfig {
        rank: 2,
        max_iters: 20_000,
        seed: 3,
        ..Default::default()
    };
    let fit = fit(&ds.data, &cfg).unwrap();
    let scope = ds.data.tensor.mask().complement();
    let err =
        cgtf_core::metrics::nmse(&fit.model.reconstruct(), &ds.tensor_clean, Some(&scope)).unwrap();
    assert!(err < 1e-4, "nmse {err}");
    assert!(fit.report.converged);
    assert!(
        fit.report.kkt_residual <= 1e-3,
        "kkt {}",
        fit.report.kkt_residual
    );
    assert_eq!(fit.report.history.len(), fit.report.iterations);
    assert!(fit
        .model
        .factors
        .iter()
        .all(|f| f.iter().all(|&v| v >= 0.0)));
    for g in fit.graphs.iter().flatten() {
        assert_eq!(g, &g.transpose());
    }
}

#[test]
fn fit_with_zero_mu_decreases_fit() {
    let mut spec = small_spec(2);
    spec.tensor_missing = 0.0;
    let ds = generate(&spec).unwrap();
    let cfg = SolverConfig {
        rank: 2,
        mu: 0.0,
        init: InitStrategy::Random,
        max_iters: 200,
        seed: 2,
        ..Default::default()
    };
    let solver = Solver::new(&ds.data, cfg.clone()).unwrap();
    let initial = objective(&solver.state().primal, solver.completion(), 0.0);
    let fit = solver.run().unwrap();
    assert!(fit.report.objective < initial);
}

#[test]
fn fit_invariants_hold_every_iteration() {
    let ds = generate(&small_spec(3)).unwrap();
    let cfg = SolverConfig {
        rank: 2,
        seed: 3,
        ..Default::default()
    };
    let mut solver = Solver::new(&ds.data, cfg).unwrap();
    let mask = ds.data.tensor.mask();
    for _ in 0..50 {
        solver.step().unwrap();
        let st = solver.state();
        assert!(st.factors_tilde.iter().all(|m| m.iter().all(|&v| v >= 0.0)));
        assert!(st.weights_tilde.iter().all(|m| m.iter().all(|&v| v >= 0.0)));
        let x = &solver.completion().tensor;
        let split = mask_project(x, mask, Keep::Observed)
            .unwrap()
            .add(&mask_project(x, mask, Keep::Unobserved).unwrap())
            .unwrap();
        assert_eq!(&split, x);
        assert_eq!(
            &mask_project(x, mask, Keep::Observed).unwrap(),
            ds.data.tensor.data()
        );
    }
}

#[test]
fn fit_is_deterministic() {
    let ds = generate(&small_spec(4)).unwrap();
    let cfg = SolverConfig {
        rank: 2,
        max_iters: 150,
        seed: 9,
        ..Default::default()
    };
    let a = fit(&ds.data, &cfg).unwrap();
    let b = fit(&ds.data, &cfg).unwrap();
    assert_eq!(a, b);
}

#[test]
fn absent_graphs_match_zero_mu_path() {
    let ds = generate(&small_spec(5)).unwrap();
    let tensor_only = CoupledData::tensor_only(ds.data.tensor.clone());
    let base = SolverConfig {
        rank: 2,
        max_iters: 60,
        seed: 5,
        ..Default::default()
    };
    let heavy = fit(
        &tensor_only,
        &SolverConfig {
            mu: 7.5,
            ..base.clone()
        },
    )
    .unwrap();
    let zero = fit(&tensor_only, &SolverConfig { mu: 0.0, ..base }).unwrap();
    let path = |f: &FitResult| {
        f.report
            .history
            .iter()
            .map(|r| r.objective)
            .collect::<Vec<_>>()
    };
    assert_eq!(path(&heavy), path(&zero));
}

#[test]
fn fit_reports_divergence() {
    let mut t = Tensor3::from_fn([3, 3, 3], |i, j, k| (i + j + k) as f64);
    t.set(1, 1, 1, f64::INFINITY);
    let data = CoupledData::tensor_only(ObservedTensor::fully_observed(t));
    let cfg = SolverConfig {
        rank: 2,
        init: InitStrategy::Random,
        ..Default::default()
    };
    assert!(matches!(
        fit(&data, &cfg),
        Err(Error::Diverged { iteration: 1 })
    ));
}

#[test]
fn fit_rejects_bad_config() {
    let ds = generate(&small_spec(6)).unwrap();
    for cfg in [
        SolverConfig {
            rank: 0,
            ..Default::default()
        },
        SolverConfig {
            rank: 2,
            rho: 0.0,
            ..Default::default()
        },
        SolverConfig {
            rank: 2,
            mu: -1.0,
            ..Default::default()
        },
        SolverConfig {
            rank: 2,
            tol_dual: 0.0,
            ..Default::default()
        },
        SolverConfig {
            rank: 9,
            ..Default::default()
        },
    ] {
        assert!(
            matches!(fit(&ds.data, &cfg), Err(Error::Config(_))),
            "{cfg:?}"
        );
    }
}

#[test]
fn coupled_data_rejects_mismatched_graph() {
    let t = ObservedTensor::fully_observed(Tensor3::zeros([3, 2, 2]));
    let graphs = [
        ObservedGraph::absent(3),
        ObservedGraph::absent(3),
        ObservedGraph::absent(2),
    ];
    assert!(matches!(
        CoupledData::new(t, graphs),
        Err(Error::Dimension(_))
    ));
}

#[test]
fn observed_graph_validation() {
    let asym = Matrix::from_row_slice(2, 2, &[0.0, 1.0, 2.0, 0.0]);
    assert!(ObservedGraph::fully_observed(asym).is_err());
    let neg = Matrix::from_row_slice(2, 2, &[0.0, -1.0, -1.0, 0.0]);
    assert!(ObservedGraph::fully_observed(neg.clone()).is_err());
    let hidden = DMatrix::from_row_slice(2, 2, &[true, false, false, true]);
    let g = ObservedGraph::new(neg, hidden).unwrap();
    assert_eq!(g.values(), &Matrix::zeros(2, 2));
    let lopsided = DMatrix::from_row_slice(2, 2, &[true, true, false, true]);
    assert!(ObservedGraph::new(Matrix::zeros(2, 2), lopsided).is_err());
}
