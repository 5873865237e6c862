//! Reproducible synthetic data: uniform (optionally community-structured)
//! factors, exact SNMF graphs, SNR-controlled Gaussian noise and missing
//! masks.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::multilinear::{Dims, Mask3, Matrix, ObservedTensor, Tensor3};
use crate::seed;
use crate::solver::{CoupledData, FactorModel, ObservedGraph, Vector};

/// How tensor entries go missing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TensorMaskKind {
    /// Each entry independently.
    Iid,
    /// Whole slabs along the given (0-based) mode.
    Slab(usize),
}

/// How graph entries go missing. Both kinds are symmetric.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraphMaskKind {
    /// Each unordered pair independently.
    Iid,
    /// Entire rows and columns of randomly chosen nodes.
    ColdStart,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub dims: Dims,
    pub rank: usize,
    /// Planted communities per mode; 0 leaves the factor unstructured.
    pub communities: [usize; 3],
    /// `None` means noiseless.
    pub snr_db: Option<f64>,
    pub tensor_missing: f64,
    pub tensor_mask: TensorMaskKind,
    pub graph_missing: [f64; 3],
    pub graph_mask: GraphMaskKind,
    pub graphs_present: [bool; 3],
    pub seed: u64,
}

impl SynthSpec {
    pub fn new(dims: Dims, rank: usize, seed: u64) -> Self {
        Self {
            dims,
            rank,
            communities: [0; 3],
            snr_db: None,
            tensor_missing: 0.0,
            tensor_mask: TensorMaskKind::Iid,
            graph_missing: [0.0; 3],
            graph_mask: GraphMaskKind::Iid,
            graphs_present: [true; 3],
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.dims.contains(&0) || self.rank == 0 {
            return bad(format!(
                "dims {:?} and rank {} must be positive",
                self.dims, self.rank
            ));
        }
        let fractions = std::iter::once(self.tensor_missing).chain(self.graph_missing);
        if fractions.into_iter().any(|f| !(0.0..=1.0).contains(&f)) {
            return bad("missing fractions must lie in [0, 1]".into());
        }
        for n in 0..3 {
            let c = self.communities[n];
            if c > self.rank || c > self.dims[n] {
                return bad(format!(
                    "mode {n}: {c} communities exceed rank {} or size {}",
                    self.rank, self.dims[n]
                ));
            }
        }
        if let TensorMaskKind::Slab(m) = self.tensor_mask {
            if m > 2 {
                return bad(format!("slab mode {m} out of range"));
            }
        }
        if matches!(self.snr_db, Some(s) if s.is_nan()) {
            return bad("snr_db is NaN".into());
        }
        Ok(())
    }
}

/// Generating factors plus planted community labels (1-based) for
/// community-structured modes.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub model: FactorModel,
    pub labels: [Option<Vec<usize>>; 3],
}

/// Uniform `[0, 1)` factors. Community-structured modes get one dominant
/// entry per row (uniform `[0.7, 1)` in the planted community's column, the
/// rest uniform `[0, 0.2)`), with balanced shuffled community sizes. Weights
/// `d_n` are uniform `[0.5, 1.5)`.
pub fn gen_factors(spec: &SynthSpec) -> Result<GroundTruth> {
    spec.validate()?;
    let mut rng = seed::stream(spec.seed, "factors");
    let mut labels: [Option<Vec<usize>>; 3] = [None, None, None];
    let mut factors: [Matrix; 3] = std::array::from_fn(|_| Matrix::zeros(0, 0));
    for n in 0..3 {
        let rows = spec.dims[n];
        let c = spec.communities[n];
        if c == 0 {
            factors[n] = Matrix::from_fn(rows, spec.rank, |_, _| rng.random::<f64>());
            continue;
        }
        let mut plant: Vec<usize> = (0..rows).map(|i| i % c).collect();
        plant.shuffle(&mut rng);
        factors[n] = Matrix::from_fn(rows, spec.rank, |i, r| {
            if r == plant[i] {
                rng.random_range(0.7..1.0)
            } else {
                rng.random_range(0.0..0.2)
            }
        });
        labels[n] = Some(plant.into_iter().map(|l| l + 1).collect());
    }
    let weights =
        std::array::from_fn(|_| Vector::from_fn(spec.rank, |_, _| rng.random_range(0.5..1.5)));
    Ok(GroundTruth {
        model: FactorModel::new(factors, weights)?,
        labels,
    })
}

/// Exact graphs `G_n = A_n diag(d_n) A_n^T`.
pub fn gen_graphs(model: &FactorModel) -> [Matrix; 3] {
    std::array::from_fn(|n| {
        let g = model.graph(n);
        // exact symmetry regardless of summation order
        Matrix::from_fn(g.nrows(), g.ncols(), |i, j| {
            if i <= j {
                g[(i, j)]
            } else {
                g[(j, i)]
            }
        })
    })
}

/// Adds zero-mean Gaussian noise with variance
/// `mean(x^2) / 10^(snr_db / 10)`. An infinite SNR leaves `t` unchanged.
pub fn add_noise_snr(t: &Tensor3, snr_db: f64, seed: u64) -> Tensor3 {
    if snr_db.is_infinite() && snr_db > 0.0 {
        return t.clone();
    }
    let power = t.values().iter().map(|v| v * v).sum::<f64>() / t.len().max(1) as f64;
    let sigma = (power / 10f64.powf(snr_db / 10.0)).sqrt();
    let mut rng = seed::stream(seed, "noise");
    let values = t
        .values()
        .iter()
        .map(|&v| v + sigma * rng.sample::<f64, _>(StandardNormal))
        .collect();
    Tensor3::from_values(t.dims(), values).expect("same dims")
}

fn count_for(fraction: f64, n: usize) -> usize {
    ((fraction * n as f64).round() as usize).min(n)
}

/// Tensor observation mask with roughly `missing` of the entries (or slabs)
/// unobserved.
pub fn gen_mask(dims: Dims, missing: f64, kind: TensorMaskKind, seed: u64) -> Mask3 {
    let mut rng = seed::stream(seed, "tensor-mask");
    match kind {
        TensorMaskKind::Iid => {
            let flags = (0..dims.iter().product::<usize>())
                .map(|_| rng.random::<f64>() >= missing)
                .collect();
            Mask3::from_flags(dims, flags).expect("sized")
        }
        TensorMaskKind::Slab(mode) => {
            let mut slabs: Vec<usize> = (0..dims[mode]).collect();
            slabs.shuffle(&mut rng);
            let mut blank = vec![false; dims[mode]];
            for &s in &slabs[..count_for(missing, dims[mode])] {
                blank[s] = true;
            }
            let mut mask = Mask3::full(dims, true);
            for k in 0..dims[2] {
                for j in 0..dims[1] {
                    for i in 0..dims[0] {
                        if blank[[i, j, k][mode]] {
                            mask.set(i, j, k, false);
                        }
                    }
                }
            }
            mask
        }
    }
}

/// Symmetric graph observation mask. The cold-start kind blanks rows and
/// columns of `round(n (1 - sqrt(1 - missing)))` nodes, which removes about
/// `missing` of the entries.
pub fn gen_graph_mask(n: usize, missing: f64, kind: GraphMaskKind, seed: u64) -> DMatrix<bool> {
    let mut rng = seed::stream(seed, "graph-mask");
    match kind {
        GraphMaskKind::Iid => {
            let mut mask = DMatrix::from_element(n, n, true);
            for j in 0..n {
                for i in 0..=j {
                    let seen = rng.random::<f64>() >= missing;
                    mask[(i, j)] = seen;
                    mask[(j, i)] = seen;
                }
            }
            mask
        }
        GraphMaskKind::ColdStart => {
            let mut nodes: Vec<usize> = (0..n).collect();
            nodes.shuffle(&mut rng);
            let k = count_for(1.0 - (1.0 - missing).sqrt(), n);
            let mut cold = vec![false; n];
            for &v in &nodes[..k] {
                cold[v] = true;
            }
            DMatrix::from_fn(n, n, |i, j| !(cold[i] || cold[j]))
        }
    }
}

/// A complete synthetic problem with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub truth: GroundTruth,
    /// Noiseless CP tensor.
    pub tensor_clean: Tensor3,
    /// Noisy tensor before masking.
    pub tensor_noisy: Tensor3,
    pub graphs_full: [Matrix; 3],
    pub data: CoupledData,
}

pub fn generate(spec: &SynthSpec) -> Result<SynthDataset> {
    let truth = gen_factors(spec)?;
    let tensor_clean = truth.model.reconstruct();
    let tensor_noisy = match spec.snr_db {
        Some(snr) => add_noise_snr(&tensor_clean, snr, seed::sub_seed(spec.seed, "noise")),
        None => tensor_clean.clone(),
    };
    let mask = gen_mask(
        spec.dims,
        spec.tensor_missing,
        spec.tensor_mask,
        seed::sub_seed(spec.seed, "mask"),
    );
    let tensor = ObservedTensor::new(tensor_noisy.clone(), mask)?;
    let graphs_full = gen_graphs(&truth.model);
    let mut graphs = Vec::with_capacity(3);
    for n in 0..3 {
        graphs.push(if spec.graphs_present[n] {
            let s = seed::indexed_seed(spec.seed, "graph-mask", n as u64);
            let mask = gen_graph_mask(spec.dims[n], spec.graph_missing[n], spec.graph_mask, s);
            ObservedGraph::new(graphs_full[n].clone(), mask)?
        } else {
            ObservedGraph::absent(spec.dims[n])
        });
    }
    let graphs: [ObservedGraph; 3] = graphs.try_into().expect("three modes");
    let data = CoupledData::new(tensor, graphs)?;
    Ok(SynthDataset {
        truth,
        tensor_clean,
        tensor_noisy,
        graphs_full,
        data,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn factors_reproducible_and_nonnegative() {
        let spec = SynthSpec::new([5, 4, 3], 2, 42);
        let a = gen_factors(&spec).unwrap();
        assert_eq!(a, gen_factors(&spec).unwrap());
        assert!(a
            .model
            .factors
            .iter()
            .all(|f| f.iter().all(|&v| (0.0..1.0).contains(&v))));
        assert!(a.model.reconstruct().values().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn community_rows_argmax_to_plant() {
        let mut spec = SynthSpec::new([30, 4, 3], 4, 5);
        spec.communities = [4, 0, 0];
        let truth = gen_factors(&spec).unwrap();
        let labels = truth.labels[0].as_ref().unwrap();
        let a = &truth.model.factors[0];
        for i in 0..30 {
            let best = (0..4).fold(0, |b, r| if a[(i, r)] > a[(i, b)] { r } else { b });
            assert_eq!(best + 1, labels[i]);
        }
        let mut sizes = [0; 4];
        labels.iter().for_each(|&l| sizes[l - 1] += 1);
        assert!(sizes.iter().all(|&s| s == 7 || s == 8));
    }

    #[test]
    fn too_many_communities_rejected() {
        let mut spec = SynthSpec::new([5, 4, 3], 2, 0);
        spec.communities = [3, 0, 0];
        assert!(gen_factors(&spec).is_err());
    }

    #[test]
    fn graphs_are_exact_snmf() {
        let truth = gen_factors(&SynthSpec::new([6, 5, 4], 3, 1)).unwrap();
        let gs = gen_graphs(&truth.model);
        for (n, g) in gs.iter().enumerate() {
            assert_eq!(g, &g.transpose());
            let a = &truth.model.factors[n];
            let d = &truth.model.weights[n];
            for i in 0..g.nrows() {
                for j in 0..g.ncols() {
                    let oracle: f64 = (0..3).map(|r| a[(i, r)] * d[r] * a[(j, r)]).sum();
                    assert!((g[(i, j)] - oracle).abs() < 1e-12);
                }
            }
        }
        let mut unit = truth.model.clone();
        unit.weights = std::array::from_fn(|_| Vector::from_element(3, 1.0));
        let a = &unit.factors[0];
        assert!((gen_graphs(&unit)[0].clone() - a * a.transpose()).norm() < 1e-12);
    }

    #[test]
    fn noise_hits_target_snr() {
        let t = Tensor3::from_fn([30, 20, 20], |i, j, k| {
            1.0 + ((i * 7 + j * 3 + k) % 11) as f64
        });
        for snr in [5.0, 15.0, 25.0] {
            let noisy = add_noise_snr(&t, snr, 9);
            let noise = noisy.sub(&t).unwrap();
            let emp = 10.0 * (t.norm().powi(2) / noise.norm().powi(2)).log10();
            assert!((emp - snr).abs() < 0.5, "target {snr} got {emp}");
        }
        assert_eq!(add_noise_snr(&t, f64::INFINITY, 1), t);
        assert_eq!(add_noise_snr(&t, 10.0, 3), add_noise_snr(&t, 10.0, 3));
    }

    #[test]
    fn mask_fractions() {
        let dims = [25, 20, 20];
        assert_eq!(
            gen_mask(dims, 0.0, TensorMaskKind::Iid, 1).count_observed(),
            10_000
        );
        assert_eq!(
            gen_mask(dims, 1.0, TensorMaskKind::Iid, 1).count_observed(),
            0
        );
        let m = gen_mask(dims, 0.3, TensorMaskKind::Iid, 1);
        let missing = 1.0 - m.count_observed() as f64 / 10_000.0;
        assert!((missing - 0.3).abs() < 0.02);

        let m = gen_mask([4, 5, 10], 0.3, TensorMaskKind::Slab(2), 2);
        let blank: Vec<usize> = (0..10).filter(|&k| !m.is_observed(0, 0, k)).collect();
        assert_eq!(blank.len(), 3);
        for &k in &blank {
            assert!((0..4).all(|i| (0..5).all(|j| !m.is_observed(i, j, k))));
        }
    }

    #[test]
    fn graph_masks_symmetric() {
        let m = gen_graph_mask(100, 0.4, GraphMaskKind::Iid, 3);
        assert_eq!(m, m.transpose());
        let frac = m.iter().filter(|&&b| !b).count() as f64 / 1e4;
        assert!((frac - 0.4).abs() < 0.02);

        let m = gen_graph_mask(100, 0.9, GraphMaskKind::ColdStart, 3);
        assert_eq!(m, m.transpose());
        let cold: Vec<usize> = (0..100).filter(|&i| (0..100).all(|j| !m[(i, j)])).collect();
        assert_eq!(cold.len(), 68);
        assert_eq!(
            gen_graph_mask(10, 0.0, GraphMaskKind::ColdStart, 1)
                .iter()
                .filter(|&&b| b)
                .count(),
            100
        );
        assert!(gen_graph_mask(10, 1.0, GraphMaskKind::ColdStart, 1)
            .iter()
            .all(|&b| !b));
    }

    #[test]
    fn pipeline_deterministic() {
        let mut spec = SynthSpec::new([6, 5, 4], 2, 77);
        spec.snr_db = Some(10.0);
        spec.tensor_missing = 0.3;
        spec.graph_missing = [0.5, 0.0, 0.2];
        assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
    }
}
