//! Experiment configuration, read from TOML and overridden by flags.
//!
//! ```toml
//! seed = 7
//! out = "results"
//!
//! [solver]
//! rank = 3
//! mu = 1.0
//!
//! [synth]
//! dims = [20, 20, 10]
//! rank = 3
//! tensor_missing = 0.3
//! ```
//!
//! Relative paths in `[data]` resolve against the config file's directory.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use cgtf_core::solver::{InitStrategy, SolverConfig};
use cgtf_core::synthgen::{GraphMaskKind, SynthSpec, TensorMaskKind};
use serde::Deserialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    Impute,
    SnrSweep,
    Communities,
    Roc,
    Synth,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::Impute => "impute",
            Kind::SnrSweep => "snr-sweep",
            Kind::Communities => "communities",
            Kind::Roc => "roc",
            Kind::Synth => "synth",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Init {
    Snmf,
    Random,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    /// Falls back to `synth.rank`.
    pub rank: Option<usize>,
    pub mu: f64,
    pub rho: f64,
    pub max_iters: usize,
    pub tol_primal: f64,
    pub tol_dual: f64,
    pub init: Init,
}

impl Default for SolverSection {
    fn default() -> Self {
        let d = SolverConfig::default();
        Self {
            rank: None,
            mu: d.mu,
            rho: d.rho,
            max_iters: d.max_iters,
            tol_primal: d.tol_primal,
            tol_dual: d.tol_dual,
            init: Init::Snmf,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub tensor: PathBuf,
    pub graph0: Option<PathBuf>,
    pub graph1: Option<PathBuf>,
    pub graph2: Option<PathBuf>,
    /// Ground truth used for held-out metrics.
    pub truth_tensor: Option<PathBuf>,
    pub truth_graph0: Option<PathBuf>,
    pub truth_graph1: Option<PathBuf>,
    pub truth_graph2: Option<PathBuf>,
    pub labels0: Option<PathBuf>,
    pub labels1: Option<PathBuf>,
    pub labels2: Option<PathBuf>,
}

impl DataSection {
    pub fn graphs(&self) -> [Option<&PathBuf>; 3] {
        [
            self.graph0.as_ref(),
            self.graph1.as_ref(),
            self.graph2.as_ref(),
        ]
    }

    pub fn truth_graphs(&self) -> [Option<&PathBuf>; 3] {
        [
            self.truth_graph0.as_ref(),
            self.truth_graph1.as_ref(),
            self.truth_graph2.as_ref(),
        ]
    }

    pub fn labels(&self) -> [Option<&PathBuf>; 3] {
        [
            self.labels0.as_ref(),
            self.labels1.as_ref(),
            self.labels2.as_ref(),
        ]
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.tensor);
        for p in [
            &mut self.graph0,
            &mut self.graph1,
            &mut self.graph2,
            &mut self.truth_tensor,
            &mut self.truth_graph0,
            &mut self.truth_graph1,
            &mut self.truth_graph2,
            &mut self.labels0,
            &mut self.labels1,
            &mut self.labels2,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TensorMask {
    Iid,
    Slab,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GraphMask {
    Iid,
    ColdStart,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSection {
    pub dims: [usize; 3],
    pub rank: usize,
    #[serde(default)]
    pub communities: [usize; 3],
    pub snr_db: Option<f64>,
    #[serde(default)]
    pub tensor_missing: f64,
    #[serde(default = "iid_tensor")]
    pub tensor_mask: TensorMask,
    /// Mode whose slabs are blanked when `tensor_mask = "slab"`.
    #[serde(default)]
    pub slab_mode: usize,
    #[serde(default)]
    pub graph_missing: [f64; 3],
    #[serde(default = "iid_graph")]
    pub graph_mask: GraphMask,
    #[serde(default = "all_present")]
    pub graphs_present: [bool; 3],
}

fn iid_tensor() -> TensorMask {
    TensorMask::Iid
}

fn iid_graph() -> GraphMask {
    GraphMask::Iid
}

fn all_present() -> [bool; 3] {
    [true; 3]
}

impl SynthSection {
    pub fn spec(&self, seed: u64) -> SynthSpec {
        SynthSpec {
            communities: self.communities,
            snr_db: self.snr_db,
            tensor_missing: self.tensor_missing,
            tensor_mask: match self.tensor_mask {
                TensorMask::Iid => TensorMaskKind::Iid,
                TensorMask::Slab => TensorMaskKind::Slab(self.slab_mode),
            },
            graph_missing: self.graph_missing,
            graph_mask: match self.graph_mask {
                GraphMask::Iid => GraphMaskKind::Iid,
                GraphMask::ColdStart => GraphMaskKind::ColdStart,
            },
            graphs_present: self.graphs_present,
            ..SynthSpec::new(self.dims, self.rank, seed)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub snr_db: Vec<f64>,
    /// Independent datasets per grid point.
    pub replicates: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            snr_db: vec![5.0, 15.0, 25.0, 35.0],
            replicates: 5,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CommunitySection {
    /// Communities per mode; 0 assigns each node to its argmax component.
    pub k: [usize; 3],
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RocSection {
    pub thresholds: usize,
    /// Held-out entries whose true value exceeds this count as positives;
    /// defaults to the median true value of the held-out set.
    pub positive_above: Option<f64>,
}

impl Default for RocSection {
    fn default() -> Self {
        Self {
            thresholds: 101,
            positive_above: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Must match the subcommand when given.
    pub kind: Option<Kind>,
    #[serde(default)]
    pub seed: u64,
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub solver: SolverSection,
    pub data: Option<DataSection>,
    pub synth: Option<SynthSection>,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub communities: CommunitySection,
    #[serde(default)]
    pub roc: RocSection,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub rank: Option<usize>,
    pub mu: Option<f64>,
    pub rho: Option<f64>,
    pub max_iters: Option<usize>,
    /// Sets both tolerances.
    pub tol: Option<f64>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg = Self::parse(&text).with_context(|| format!("in {}", path.display()))?;
        if let Some(d) = cfg.data.as_mut() {
            d.resolve(path.parent().unwrap_or(Path::new(".")));
        }
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = &o.out {
            self.out = Some(v.clone());
        }
        let s = &mut self.solver;
        if let Some(v) = o.rank {
            s.rank = Some(v);
        }
        if let Some(v) = o.mu {
            s.mu = v;
        }
        if let Some(v) = o.rho {
            s.rho = v;
        }
        if let Some(v) = o.max_iters {
            s.max_iters = v;
        }
        if let Some(v) = o.tol {
            s.tol_primal = v;
            s.tol_dual = v;
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("."))
    }

    pub fn solver_config(&self, seed: u64) -> Result<SolverConfig> {
        let s = &self.solver;
        let Some(rank) = s.rank.or(self.synth.as_ref().map(|y| y.rank)) else {
            bail!("solver.rank is required when no [synth] section is given");
        };
        let cfg = SolverConfig {
            rank,
            mu: s.mu,
            rho: s.rho,
            max_iters: s.max_iters,
            tol_primal: s.tol_primal,
            tol_dual: s.tol_dual,
            seed,
            init: match s.init {
                Init::Snmf => InitStrategy::Snmf,
                Init::Random => InitStrategy::Random,
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks everything the subcommand needs before any work starts.
    pub fn validate(&self, kind: Kind) -> Result<()> {
        if let Some(k) = self.kind {
            if k != kind {
                bail!(
                    "config is for `{}` but `{}` was requested",
                    k.name(),
                    kind.name()
                );
            }
        }
        if let Some(y) = &self.synth {
            y.spec(0).validate()?;
        }
        let needs_synth = matches!(kind, Kind::SnrSweep | Kind::Synth);
        match (&self.data, &self.synth) {
            (_, None) if needs_synth => bail!("`{}` needs a [synth] section", kind.name()),
            (Some(_), Some(_)) if !needs_synth => bail!("give either [data] or [synth], not both"),
            (None, None) => bail!("no dataset: give a [data] or [synth] section"),
            _ => {}
        }
        if kind != Kind::Synth {
            self.solver_config(0)?;
        }
        if kind == Kind::SnrSweep {
            if self.sweep.snr_db.is_empty() || self.sweep.replicates == 0 {
                bail!("sweep needs at least one SNR point and one replicate");
            }
            if self.sweep.snr_db.iter().any(|v| v.is_nan()) {
                bail!("sweep SNR values must not be NaN");
            }
        }
        if kind == Kind::Roc {
            if self.roc.thresholds < 2 {
                bail!("roc.thresholds must be at least 2");
            }
            if let Some(d) = &self.data {
                if d.truth_tensor.is_none() {
                    bail!("roc on file data needs data.truth_tensor");
                }
            }
        }
        Ok(())
    }
}
