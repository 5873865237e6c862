use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use cgtf_cli::config::{ExperimentConfig, Kind, Overrides};
use cgtf_cli::run;
use clap::{Args, Parser, Subcommand};

/// Coupled graph-tensor factorization experiments.
#[derive(Parser)]
#[command(name = "cgtf", version, allow_negative_numbers = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit and write the imputed tensor, graphs, fit report and metrics.
    /// Exits 2 when the iteration cap is hit before convergence.
    Impute(Flags),
    /// Compare CGTF with masked PARAFAC over an SNR grid.
    SnrSweep(Flags),
    /// Fit and assign community labels per mode.
    Communities(Flags),
    /// Detection curves on held-out tensor entries and graph pairs.
    Roc(Flags),
    /// Write a generated dataset and a config that loads it.
    Synth(Flags),
}

#[derive(Args)]
#[command(allow_negative_numbers = true)]
struct Flags {
    /// TOML experiment config.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    rank: Option<usize>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Primal and dual tolerance.
    #[arg(long)]
    tol: Option<f64>,
}

fn execute(kind: Kind, flags: Flags) -> Result<ExitCode> {
    let mut cfg = match &flags.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    cfg.apply(&Overrides {
        seed: flags.seed,
        out: flags.out,
        rank: flags.rank,
        mu: flags.mu,
        rho: flags.rho,
        max_iters: flags.max_iters,
        tol: flags.tol,
    });
    cfg.validate(kind)?;
    run::configure_threads()?;
    let dir = cfg.out_dir();
    match kind {
        Kind::Impute => {
            let out = run::run_impute(&cfg)?;
            let r = &out.fit.report;
            eprintln!(
                "{} after {} iterations, kkt residual {:e}; results in {}",
                if r.converged {
                    "converged"
                } else {
                    "stopped at max-iters"
                },
                r.iterations,
                r.kkt_residual,
                dir.display()
            );
            return Ok(if out.converged() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            });
        }
        Kind::SnrSweep => {
            for p in run::run_snr_sweep(&cfg)? {
                eprintln!(
                    "snr {} dB: cgtf {:e}, parafac {:e}",
                    p.snr_db, p.nmse_cgtf, p.nmse_baseline
                );
            }
        }
        Kind::Communities => {
            let out = run::run_communities(&cfg)?;
            for (n, v) in out.nmi.iter().enumerate() {
                if let Some(v) = v {
                    eprintln!("mode {n}: nmi {v:.4}");
                }
            }
        }
        Kind::Roc => {
            run::run_roc(&cfg)?;
        }
        Kind::Synth => {
            let path = run::run_synth(&cfg)?;
            eprintln!("wrote {}", path.display());
            return Ok(ExitCode::SUCCESS);
        }
    }
    eprintln!("results in {}", dir.display());
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let (kind, flags) = match cli.command {
        Command::Impute(f) => (Kind::Impute, f),
        Command::SnrSweep(f) => (Kind::SnrSweep, f),
        Command::Communities(f) => (Kind::Communities, f),
        Command::Roc(f) => (Kind::Roc, f),
        Command::Synth(f) => (Kind::Synth, f),
    };
    match execute(kind, flags) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
