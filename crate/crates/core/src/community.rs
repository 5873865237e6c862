//! Community detection from fitted factors.
//!
//! Each factor is scaled as `C_n = A_n diag(sqrt(d_n))`. With as many
//! communities as the rank, a node joins the column holding its row's
//! largest entry; otherwise the rows of `C_n` are clustered with k-means.

use rand::{Rng as _, SeedableRng};

use crate::error::{Error, Result};
use crate::multilinear::Matrix;
use crate::seed::{self, Rng};
use crate::solver::{FactorModel, Vector};

/// Hard assignment of `I` nodes to communities `1..=C`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    labels: Vec<usize>,
    num_communities: usize,
}

impl Partition {
    pub fn new(labels: Vec<usize>, num_communities: usize) -> Result<Self> {
        if let Some(&bad) = labels.iter().find(|&&l| l == 0 || l > num_communities) {
            return Err(Error::Config(format!(
                "label {bad} outside 1..={num_communities}"
            )));
        }
        Ok(Self {
            labels,
            num_communities,
        })
    }

    /// Uses the largest label as the community count.
    pub fn from_labels(labels: Vec<usize>) -> Result<Self> {
        let c = labels.iter().copied().max().unwrap_or(0);
        Self::new(labels, c)
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_communities(&self) -> usize {
        self.num_communities
    }

    pub fn num_nodes(&self) -> usize {
        self.labels.len()
    }

    /// Node sets (0-based node ids) per community; empty communities included.
    pub fn cover_sets(&self) -> Vec<Vec<usize>> {
        let mut sets = vec![Vec::new(); self.num_communities];
        for (i, &l) in self.labels.iter().enumerate() {
            sets[l - 1].push(i);
        }
        sets
    }

    pub fn from_cover_sets(sets: &[Vec<usize>], num_nodes: usize) -> Result<Self> {
        let mut labels = vec![0; num_nodes];
        for (c, set) in sets.iter().enumerate() {
            for &i in set {
                if i >= num_nodes || labels[i] != 0 {
                    return Err(Error::Config(format!("node {i} missing or assigned twice")));
                }
                labels[i] = c + 1;
            }
        }
        Self::new(labels, sets.len())
    }
}

/// `C = A diag(sqrt(max(0, d)))`.
pub fn scale_factor(a: &Matrix, d: &Vector) -> Matrix {
    let mut c = a.clone();
    for (r, mut col) in c.column_iter_mut().enumerate() {
        col *= d[r].max(0.0).sqrt();
    }
    c
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArgmaxAssignment {
    pub partition: Partition,
    /// Nodes (0-based) whose row was all zero; they fall in community 1.
    pub zero_rows: Vec<usize>,
}

/// Row-wise argmax; ties go to the lowest column.
pub fn assign_argmax(c: &Matrix) -> ArgmaxAssignment {
    let mut zero_rows = Vec::new();
    let labels = (0..c.nrows())
        .map(|i| {
            let row = c.row(i);
            if row.iter().all(|&v| v == 0.0) {
                zero_rows.push(i);
            }
            let best = (0..c.ncols()).fold(0, |b, r| if row[r] > row[b] { r } else { b });
            best + 1
        })
        .collect();
    let partition = Partition::new(labels, c.ncols().max(1)).expect("labels in range");
    ArgmaxAssignment {
        partition,
        zero_rows,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansOptions {
    pub restarts: usize,
    pub max_iters: usize,
    /// Stop when no centroid moves more than this.
    pub tol: f64,
}

impl Default for KMeansOptions {
    fn default() -> Self {
        Self {
            restarts: 10,
            max_iters: 300,
            tol: 1e-8,
        }
    }
}

fn sq_dist(c: &Matrix, i: usize, centers: &Matrix, k: usize) -> f64 {
    (0..c.ncols())
        .map(|r| (c[(i, r)] - centers[(k, r)]).powi(2))
        .sum()
}

/// k-means++ seeding.
fn seed_centers(c: &Matrix, k: usize, rng: &mut Rng) -> Matrix {
    let n = c.nrows();
    let mut centers = Matrix::zeros(k, c.ncols());
    let first = rng.random_range(0..n);
    centers.row_mut(0).copy_from(&c.row(first));
    let mut dist: Vec<f64> = (0..n).map(|i| sq_dist(c, i, &centers, 0)).collect();
    for j in 1..k {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &d) in dist.iter().enumerate() {
                if target < d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centers.row_mut(j).copy_from(&c.row(pick));
        for (i, d) in dist.iter_mut().enumerate() {
            *d = d.min(sq_dist(c, i, &centers, j));
        }
    }
    centers
}

/// Lloyd iterations from `centers`; returns (labels 0-based, WCSS).
fn lloyd(c: &Matrix, mut centers: Matrix, opts: &KMeansOptions) -> (Vec<usize>, f64) {
    let (n, k) = (c.nrows(), centers.nrows());
    let mut labels = vec![0; n];
    for _ in 0..opts.max_iters {
        for (i, l) in labels.iter_mut().enumerate() {
            *l = (0..k)
                .map(|j| (j, sq_dist(c, i, &centers, j)))
                .fold((0, f64::INFINITY), |b, x| if x.1 < b.1 { x } else { b })
                .0;
        }
        let mut next = Matrix::zeros(k, c.ncols());
        let mut counts = vec![0usize; k];
        for (i, &l) in labels.iter().enumerate() {
            counts[l] += 1;
            let row = c.row(i);
            let mut target = next.row_mut(l);
            target += row;
        }
        let mut taken = vec![false; n];
        for j in 0..k {
            if counts[j] > 0 {
                let inv = 1.0 / counts[j] as f64;
                next.row_mut(j).scale_mut(inv);
                continue;
            }
            // Empty cluster: re-seed from the point farthest from its centroid.
            let far = (0..n)
                .filter(|&i| !taken[i])
                .map(|i| (i, sq_dist(c, i, &centers, labels[i])))
                .fold((0, -1.0), |b, x| if x.1 > b.1 { x } else { b })
                .0;
            taken[far] = true;
            next.row_mut(j).copy_from(&c.row(far));
        }
        let shift = (0..k)
            .map(|j| {
                (0..c.ncols())
                    .map(|r| (next[(j, r)] - centers[(j, r)]).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max);
        centers = next;
        if shift <= opts.tol {
            break;
        }
    }
    for (i, l) in labels.iter_mut().enumerate() {
        *l = (0..k)
            .map(|j| (j, sq_dist(c, i, &centers, j)))
            .fold((0, f64::INFINITY), |b, x| if x.1 < b.1 { x } else { b })
            .0;
    }
    let wcss = labels
        .iter()
        .enumerate()
        .map(|(i, &l)| sq_dist(c, i, &centers, l))
        .sum();
    (labels, wcss)
}

/// Best-of-restarts k-means on the rows of `c`. Restart `r` draws from its
/// own seeded stream; WCSS ties go to the lowest restart index.
pub fn assign_kmeans(c: &Matrix, k: usize, seed: u64, opts: &KMeansOptions) -> Result<Partition> {
    let n = c.nrows();
    if k == 0 || k > n {
        return Err(Error::Config(format!("k = {k} must be in 1..={n}")));
    }
    let mut best: Option<(Vec<usize>, f64)> = None;
    for restart in 0..opts.restarts.max(1) {
        let mut rng = Rng::seed_from_u64(seed::indexed_seed(seed, "kmeans", restart as u64));
        let centers = seed_centers(c, k, &mut rng);
        let (labels, wcss) = lloyd(c, centers, opts);
        if best.as_ref().is_none_or(|b| wcss < b.1) {
            best = Some((labels, wcss));
        }
    }
    let (labels, _) = best.expect("at least one restart");
    Partition::new(labels.into_iter().map(|l| l + 1).collect(), k)
}

/// Row-normalized `C`; all-zero rows become uniform `1/R`.
pub fn soft_assign(c: &Matrix) -> Matrix {
    let r = c.ncols();
    let mut out = c.clone();
    for mut row in out.row_iter_mut() {
        let s: f64 = row.iter().sum();
        if s > 0.0 {
            row /= s;
        } else {
            row.fill(1.0 / r as f64);
        }
    }
    out
}

/// Argmax assignment when the community count is unknown or equals the rank,
/// k-means with `k = known` otherwise.
pub fn detect(
    model: &FactorModel,
    mode: usize,
    known: Option<usize>,
    seed: u64,
    opts: &KMeansOptions,
) -> Result<Partition> {
    let c = scale_factor(&model.factors[mode], &model.weights[mode]);
    match known {
        Some(k) if k != model.rank() => assign_kmeans(&c, k, seed, opts),
        _ => Ok(assign_argmax(&c).partition),
    }
}
