//! Subcommand implementations. Each writes its tables into the output
//! directory and returns what it computed.

use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use cgtf_core::community::{detect, KMeansOptions, Partition};
use cgtf_core::metrics::{coverage_curve, nmi, nmse, roc_sweep, RocPoint};
use cgtf_core::multilinear::{Mask3, Matrix, ObservedTensor, Tensor3};
use cgtf_core::seed::{indexed_seed, sub_seed};
use cgtf_core::solver::{fit, CoupledData, FitResult, InitStrategy, ObservedGraph, SolverConfig};
use cgtf_core::synthgen::generate;
use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::io::{self, num, Table};

/// Observed data plus whatever ground truth is available.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub data: CoupledData,
    pub truth_tensor: Option<Tensor3>,
    pub truth_graphs: [Option<Matrix>; 3],
    pub truth_labels: [Option<Partition>; 3],
}

pub fn load_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    if let Some(y) = &cfg.synth {
        let ds = generate(&y.spec(sub_seed(cfg.seed, "synth")))?;
        let labels = ds
            .truth
            .labels
            .clone()
            .map(|l| l.map(Partition::from_labels).transpose());
        let [l0, l1, l2] = labels;
        return Ok(Dataset {
            truth_tensor: Some(ds.tensor_clean),
            truth_graphs: ds.graphs_full.map(Some),
            truth_labels: [l0?, l1?, l2?],
            data: ds.data,
        });
    }
    let Some(d) = &cfg.data else {
        bail!("no dataset configured");
    };
    let tensor = io::load_tensor(&d.tensor)?;
    let dims = tensor.dims();
    let mut graphs = Vec::with_capacity(3);
    for (n, p) in d.graphs().into_iter().enumerate() {
        graphs.push(match p {
            Some(p) => io::load_graph(p, dims[n])?,
            None => ObservedGraph::absent(dims[n]),
        });
    }
    let truth_tensor = d
        .truth_tensor
        .as_ref()
        .map(|p| -> Result<Tensor3> {
            let t = io::load_tensor(p)?;
            if t.dims() != dims {
                bail!(
                    "{}: dims {:?} differ from data {:?}",
                    p.display(),
                    t.dims(),
                    dims
                );
            }
            Ok(t.data().clone())
        })
        .transpose()?;
    let mut truth_graphs: [Option<Matrix>; 3] = Default::default();
    let mut truth_labels: [Option<Partition>; 3] = Default::default();
    for n in 0..3 {
        if let Some(p) = d.truth_graphs()[n] {
            truth_graphs[n] = Some(io::load_graph(p, dims[n])?.values().clone());
        }
        if let Some(p) = d.labels()[n] {
            let l = io::load_labels(p)?;
            if l.num_nodes() != dims[n] {
                bail!(
                    "{}: {} labels for {} nodes",
                    p.display(),
                    l.num_nodes(),
                    dims[n]
                );
            }
            truth_labels[n] = Some(l);
        }
    }
    let graphs: [ObservedGraph; 3] = graphs.try_into().expect("three modes");
    Ok(Dataset {
        data: CoupledData::new(tensor, graphs)?,
        truth_tensor,
        truth_graphs,
        truth_labels,
    })
}

fn out_dir(cfg: &ExperimentConfig) -> Result<PathBuf> {
    let dir = cfg.out_dir();
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

/// Scope for held-out error: the unobserved entries, or everything when
/// nothing is missing.
fn held_out(mask: &Mask3) -> Option<Mask3> {
    (mask.count_observed() < mask.flags().len()).then(|| mask.complement())
}

fn graph_nmse_missing(est: &Matrix, truth: &Matrix, g: &ObservedGraph) -> Option<f64> {
    let (mut err, mut energy, mut any) = (0.0, 0.0, false);
    for j in 0..g.n() {
        for i in 0..g.n() {
            if !g.mask()[(i, j)] {
                any = true;
                err += (est[(i, j)] - truth[(i, j)]).powi(2);
                energy += truth[(i, j)].powi(2);
            }
        }
    }
    any.then(|| err / energy)
}

fn fit_report_table(fit: &FitResult) -> Table {
    let mut header = vec![
        "iteration".to_string(),
        "objective".into(),
        "max_primal".into(),
        "max_dual".into(),
    ];
    for n in 0..3 {
        for kind in ["primal", "dual", "change"] {
            for block in ["bar", "tilde", "weights"] {
                header.push(format!("{kind}_{block}_{n}"));
            }
        }
    }
    let mut t = Table::new(header);
    for (it, rec) in fit.report.history.iter().enumerate() {
        let mut row = vec![
            (it + 1).to_string(),
            num(rec.objective),
            num(rec.max_primal),
            num(rec.max_dual),
        ];
        for n in 0..3 {
            for b in [&rec.primal[n], &rec.dual[n], &rec.aux_change[n]] {
                row.extend([num(b.bar), num(b.tilde), num(b.weights)]);
            }
        }
        t.push(row);
    }
    t
}

#[derive(Debug, Clone)]
pub struct ImputeOutcome {
    pub fit: FitResult,
    /// `(name, value)` rows of the metrics table.
    pub metrics: Vec<(String, f64)>,
}

impl ImputeOutcome {
    pub fn converged(&self) -> bool {
        self.fit.report.converged
    }
}

pub fn run_impute(cfg: &ExperimentConfig) -> Result<ImputeOutcome> {
    let ds = load_dataset(cfg)?;
    let solver = cfg.solver_config(sub_seed(cfg.seed, "solver"))?;
    let dir = out_dir(cfg)?;
    let fit = fit(&ds.data, &solver)?;

    io::write(
        &dir.join("imputed_tensor.csv"),
        &io::format_tensor(&ObservedTensor::fully_observed(fit.tensor.clone())),
    )?;
    for (n, g) in fit.graphs.iter().enumerate() {
        if let Some(g) = g {
            let g = ObservedGraph::fully_observed(g.clone())?;
            io::write(
                &dir.join(format!("imputed_graph_{n}.csv")),
                &io::format_graph(&g),
            )?;
        }
    }
    io::write(
        &dir.join("fit_report.csv"),
        &fit_report_table(&fit).render(),
    )?;

    let r = &fit.report;
    let mut metrics = vec![
        ("iterations".to_string(), r.iterations as f64),
        ("converged".to_string(), if r.converged { 1.0 } else { 0.0 }),
        ("objective".to_string(), r.objective),
        ("kkt_residual".to_string(), r.kkt_residual),
    ];
    if let Some(truth) = &ds.truth_tensor {
        let recon = fit.model.reconstruct();
        if let Some(scope) = held_out(ds.data.tensor.mask()) {
            metrics.push(("nmse_missing".into(), nmse(&recon, truth, Some(&scope))?));
        }
        metrics.push(("nmse_all".into(), nmse(&recon, truth, None)?));
    }
    for n in 0..3 {
        if let (Some(est), Some(truth)) = (&fit.graphs[n], &ds.truth_graphs[n]) {
            if let Some(e) = graph_nmse_missing(est, truth, &ds.data.graphs[n]) {
                metrics.push((format!("graph_nmse_missing_{n}"), e));
            }
        }
    }
    let mut t = Table::new(["metric", "value"]);
    for (name, v) in &metrics {
        t.push(vec![name.clone(), num(*v)]);
    }
    io::write(&dir.join("metrics.csv"), &t.render())?;
    Ok(ImputeOutcome { fit, metrics })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRun {
    pub snr_db: f64,
    pub replicate: usize,
    pub nmse_cgtf: f64,
    pub nmse_baseline: f64,
    pub iters_cgtf: usize,
    pub iters_baseline: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub snr_db: f64,
    pub nmse_cgtf: f64,
    pub nmse_baseline: f64,
}

/// One replicate at one SNR: CGTF on the coupled data against masked
/// PARAFAC, i.e. the same solver with no graphs, `mu = 0` and random init.
pub fn sweep_run(
    cfg: &ExperimentConfig,
    solver: &SolverConfig,
    snr_db: f64,
    replicate: usize,
) -> Result<SweepRun> {
    let y = cfg.synth.as_ref().context("sweep needs [synth]")?;
    let mut spec = y.spec(indexed_seed(
        sub_seed(cfg.seed, "synth"),
        "replicate",
        replicate as u64,
    ));
    spec.snr_db = Some(snr_db);
    let ds = generate(&spec)?;
    let solver = SolverConfig {
        seed: indexed_seed(sub_seed(cfg.seed, "solver"), "replicate", replicate as u64),
        ..solver.clone()
    };
    let scope = held_out(ds.data.tensor.mask());
    let cgtf = fit(&ds.data, &solver)?;
    let tensor_only = CoupledData::tensor_only(ds.data.tensor.clone());
    let base_cfg = SolverConfig {
        mu: 0.0,
        init: InitStrategy::Random,
        ..solver
    };
    let base = fit(&tensor_only, &base_cfg)?;
    Ok(SweepRun {
        snr_db,
        replicate,
        nmse_cgtf: nmse(&cgtf.model.reconstruct(), &ds.tensor_clean, scope.as_ref())?,
        nmse_baseline: nmse(&base.model.reconstruct(), &ds.tensor_clean, scope.as_ref())?,
        iters_cgtf: cgtf.report.iterations,
        iters_baseline: base.report.iterations,
    })
}

/// Replicates run in parallel; rows follow the grid order.
pub fn run_snr_sweep(cfg: &ExperimentConfig) -> Result<Vec<SweepPoint>> {
    let solver = cfg.solver_config(0)?;
    let dir = out_dir(cfg)?;
    let reps = cfg.sweep.replicates;
    let jobs: Vec<(f64, usize)> = cfg
        .sweep
        .snr_db
        .iter()
        .flat_map(|&s| (0..reps).map(move |r| (s, r)))
        .collect();
    let runs = jobs
        .par_iter()
        .map(|&(s, r)| sweep_run(cfg, &solver, s, r))
        .collect::<Result<Vec<_>>>()?;

    let mut detail = Table::new([
        "snr_db",
        "replicate",
        "nmse_cgtf",
        "nmse_parafac_baseline",
        "iters_cgtf",
        "iters_parafac_baseline",
    ]);
    for r in &runs {
        detail.push(vec![
            num(r.snr_db),
            r.replicate.to_string(),
            num(r.nmse_cgtf),
            num(r.nmse_baseline),
            r.iters_cgtf.to_string(),
            r.iters_baseline.to_string(),
        ]);
    }
    let points: Vec<SweepPoint> = runs
        .chunks(reps)
        .map(|c| SweepPoint {
            snr_db: c[0].snr_db,
            nmse_cgtf: c.iter().map(|r| r.nmse_cgtf).sum::<f64>() / reps as f64,
            nmse_baseline: c.iter().map(|r| r.nmse_baseline).sum::<f64>() / reps as f64,
        })
        .collect();
    let mut summary = Table::new(["snr_db", "nmse_cgtf", "nmse_parafac_baseline"]);
    for p in &points {
        summary.push(vec![num(p.snr_db), num(p.nmse_cgtf), num(p.nmse_baseline)]);
    }
    io::write(&dir.join("snr_sweep.csv"), &summary.render())?;
    io::write(&dir.join("snr_sweep_runs.csv"), &detail.render())?;
    Ok(points)
}

#[derive(Debug, Clone)]
pub struct CommunityOutcome {
    pub partitions: [Partition; 3],
    pub nmi: [Option<f64>; 3],
    /// `(alpha, coverage)` on the imputed graph of each graph-carrying mode.
    pub coverage: [Option<Vec<(f64, f64)>>; 3],
}

pub fn run_communities(cfg: &ExperimentConfig) -> Result<CommunityOutcome> {
    let ds = load_dataset(cfg)?;
    let solver = cfg.solver_config(sub_seed(cfg.seed, "solver"))?;
    let dir = out_dir(cfg)?;
    let fit = fit(&ds.data, &solver)?;
    let opts = KMeansOptions::default();
    let kmeans = sub_seed(cfg.seed, "kmeans");

    let mut parts = Vec::with_capacity(3);
    let mut nmis: [Option<f64>; 3] = [None; 3];
    let mut coverage: [Option<Vec<(f64, f64)>>; 3] = Default::default();
    let mut nmi_table = Table::new(["mode", "num_communities", "nmi"]);
    for n in 0..3 {
        let k = cfg.communities.k[n];
        let p = detect(
            &fit.model,
            n,
            (k > 0).then_some(k),
            indexed_seed(kmeans, "mode", n as u64),
            &opts,
        )?;
        io::write(&dir.join(format!("labels_{n}.csv")), &io::format_labels(&p))?;
        if let Some(truth) = &ds.truth_labels[n] {
            let v = nmi(truth, &p)?.value;
            nmis[n] = Some(v);
            nmi_table.push(vec![n.to_string(), p.num_communities().to_string(), num(v)]);
        }
        if let Some(g) = &fit.graphs[n] {
            let curve = coverage_curve(g, &p)?;
            let mut t = Table::new(["alpha", "coverage"]);
            for &(a, c) in &curve {
                t.push(vec![num(a), num(c)]);
            }
            io::write(&dir.join(format!("coverage_{n}.csv")), &t.render())?;
            coverage[n] = Some(curve);
        }
        parts.push(p);
    }
    io::write(&dir.join("nmi.csv"), &nmi_table.render())?;
    let partitions: [Partition; 3] = parts.try_into().expect("three modes");
    Ok(CommunityOutcome {
        partitions,
        nmi: nmis,
        coverage,
    })
}

fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

fn roc_table(points: &[RocPoint]) -> Table {
    let mut t = Table::new(["threshold", "tpr", "fpr"]);
    for p in points {
        t.push(vec![num(p.threshold), num(p.tpr), num(p.fpr)]);
    }
    t
}

fn detect_roc(scores: &[f64], truth: &[f64], cfg: &ExperimentConfig) -> Result<Vec<RocPoint>> {
    let cut = cfg.roc.positive_above.unwrap_or_else(|| median(truth));
    let labels: Vec<bool> = truth.iter().map(|&v| v > cut).collect();
    Ok(roc_sweep(scores, &labels, cfg.roc.thresholds)?)
}

#[derive(Debug, Clone)]
pub struct RocOutcome {
    pub tensor: Vec<RocPoint>,
    pub graphs: [Option<Vec<RocPoint>>; 3],
}

/// Detection sweeps over held-out tensor entries and graph pairs, scored by
/// the imputed values.
pub fn run_roc(cfg: &ExperimentConfig) -> Result<RocOutcome> {
    let ds = load_dataset(cfg)?;
    let truth = ds
        .truth_tensor
        .as_ref()
        .context("roc needs a ground-truth tensor")?;
    let solver = cfg.solver_config(sub_seed(cfg.seed, "solver"))?;
    let dir = out_dir(cfg)?;
    let fit = fit(&ds.data, &solver)?;

    let mask = ds.data.tensor.mask();
    let (mut scores, mut values) = (Vec::new(), Vec::new());
    for (idx, &observed) in mask.flags().iter().enumerate() {
        if !observed {
            scores.push(fit.tensor.values()[idx]);
            values.push(truth.values()[idx]);
        }
    }
    let tensor = detect_roc(&scores, &values, cfg)?;
    io::write(&dir.join("roc_tensor.csv"), &roc_table(&tensor).render())?;

    let mut graphs: [Option<Vec<RocPoint>>; 3] = Default::default();
    for n in 0..3 {
        let (Some(est), Some(tg)) = (&fit.graphs[n], &ds.truth_graphs[n]) else {
            continue;
        };
        let g = &ds.data.graphs[n];
        let (mut scores, mut values) = (Vec::new(), Vec::new());
        for j in 0..g.n() {
            for i in 0..=j {
                if !g.mask()[(i, j)] {
                    scores.push(est[(i, j)]);
                    values.push(tg[(i, j)]);
                }
            }
        }
        let pts = detect_roc(&scores, &values, cfg)?;
        io::write(
            &dir.join(format!("roc_graph_{n}.csv")),
            &roc_table(&pts).render(),
        )?;
        graphs[n] = Some(pts);
    }
    Ok(RocOutcome { tensor, graphs })
}

/// Writes a generated dataset as loader-compatible files, plus a config
/// (`dataset.toml`) that points `impute` and friends at them. Noisy
/// observations below zero are written as zero.
pub fn run_synth(cfg: &ExperimentConfig) -> Result<PathBuf> {
    let y = cfg.synth.as_ref().context("synth needs [synth]")?;
    let ds = generate(&y.spec(sub_seed(cfg.seed, "synth")))?;
    let dir = out_dir(cfg)?;
    let write = |name: &str, text: String| io::write(&dir.join(name), &text);

    let mut observed = ds.data.tensor.data().clone();
    observed
        .values_mut()
        .iter_mut()
        .for_each(|v| *v = v.max(0.0));
    write(
        "tensor.csv",
        io::format_tensor(&ObservedTensor::new(
            observed,
            ds.data.tensor.mask().clone(),
        )?),
    )?;
    write(
        "truth_tensor.csv",
        io::format_tensor(&ObservedTensor::fully_observed(ds.tensor_clean.clone())),
    )?;
    let mut toml = format!(
        "seed = {}\n\n[solver]\nrank = {}\n\n[data]\ntensor = \"tensor.csv\"\ntruth_tensor = \"truth_tensor.csv\"\n",
        cfg.seed, y.rank
    );
    for n in 0..3 {
        if ds.data.graphs[n].is_present() {
            write(
                &format!("graph_{n}.csv"),
                io::format_graph(&ds.data.graphs[n]),
            )?;
            toml.push_str(&format!("graph{n} = \"graph_{n}.csv\"\n"));
        }
        let full = ObservedGraph::fully_observed(ds.graphs_full[n].clone())?;
        write(&format!("truth_graph_{n}.csv"), io::format_graph(&full))?;
        toml.push_str(&format!("truth_graph{n} = \"truth_graph_{n}.csv\"\n"));
        if let Some(l) = &ds.truth.labels[n] {
            write(
                &format!("labels_{n}.csv"),
                io::format_labels(&Partition::from_labels(l.clone())?),
            )?;
            toml.push_str(&format!("labels{n} = \"labels_{n}.csv\"\n"));
        }
    }
    let path = dir.join("dataset.toml");
    io::write(&path, &toml)?;
    Ok(path)
}

/// Caps rayon's pool at `CGTF_THREADS` when set.
pub fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var("CGTF_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .with_context(|| format!("CGTF_THREADS={v:?} is not a count"))?;
    if n == 0 {
        bail!("CGTF_THREADS must be at least 1");
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .ok();
    Ok(())
}
