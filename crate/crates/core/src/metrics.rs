//! Evaluation metrics: partition agreement (entropy, MI, NMI), community
//! quality (conductance, coverage), imputation error (NMSE) and ROC sweeps.
//!
//! Logarithms are natural.

use std::collections::HashMap;

use crate::community::Partition;
use crate::error::{dim_err, Result};
use crate::multilinear::{Mask3, Matrix, Tensor3};

pub fn entropy(p: &Partition) -> f64 {
    let n = p.num_nodes() as f64;
    // same per-term arithmetic as `mutual_info`, so MI(s, s) == H(s) exactly
    let h: f64 = p
        .cover_sets()
        .iter()
        .filter(|s| !s.is_empty())
        .map(|s| {
            let c = s.len() as f64;
            (c / n) * (n / c).ln()
        })
        .sum();
    h.max(0.0)
}

fn check_same_nodes(s: &Partition, t: &Partition) -> Result<()> {
    if s.num_nodes() != t.num_nodes() {
        return dim_err(format!(
            "partitions cover {} and {} nodes",
            s.num_nodes(),
            t.num_nodes()
        ));
    }
    Ok(())
}

pub fn mutual_info(s: &Partition, s_hat: &Partition) -> Result<f64> {
    check_same_nodes(s, s_hat)?;
    let n = s.num_nodes() as f64;
    let mut joint: HashMap<(usize, usize), usize> = HashMap::new();
    for (&a, &b) in s.labels().iter().zip(s_hat.labels()) {
        *joint.entry((a, b)).or_default() += 1;
    }
    let sizes = |p: &Partition| {
        let mut v = vec![0usize; p.num_communities() + 1];
        p.labels().iter().for_each(|&l| v[l] += 1);
        v
    };
    let (sa, sb) = (sizes(s), sizes(s_hat));
    let mut keys: Vec<_> = joint.into_iter().collect();
    keys.sort_unstable();
    let mi: f64 = keys
        .into_iter()
        .map(|((a, b), c)| {
            let c = c as f64;
            (c / n) * (c * n / (sa[a] as f64 * sb[b] as f64)).ln()
        })
        .sum();
    Ok(mi.max(0.0))
}

/// NMI value plus whether the 0/0 convention was applied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Nmi {
    pub value: f64,
    /// Both partitions have zero entropy; `value` is then 1 by convention.
    pub degenerate: bool,
}

/// `2 MI / (H(S) + H(Ŝ))`, clamped to `[0, 1]`.
pub fn nmi(s: &Partition, s_hat: &Partition) -> Result<Nmi> {
    let mi = mutual_info(s, s_hat)?;
    let denom = entropy(s) + entropy(s_hat);
    if denom == 0.0 {
        return Ok(Nmi {
            value: 1.0,
            degenerate: true,
        });
    }
    Ok(Nmi {
        value: (2.0 * mi / denom).clamp(0.0, 1.0),
        degenerate: false,
    })
}

/// Sum of incident weights over the nodes in `set`, diagonal included.
pub fn volume(g: &Matrix, set: &[usize]) -> f64 {
    set.iter().map(|&i| g.row(i).sum()).sum()
}

/// `cut(C, C^c) / min(vol(C), vol(C^c))`. Empty or full sets and a zero
/// denominator give 1.
pub fn conductance(g: &Matrix, set: &[usize]) -> Result<f64> {
    let n = g.nrows();
    if g.ncols() != n {
        return dim_err("graph must be square");
    }
    let mut inside = vec![false; n];
    for &i in set {
        if i >= n {
            return dim_err(format!("node {i} out of range for {n}-node graph"));
        }
        inside[i] = true;
    }
    let members: Vec<usize> = (0..n).filter(|&i| inside[i]).collect();
    let rest: Vec<usize> = (0..n).filter(|&i| !inside[i]).collect();
    if members.is_empty() || rest.is_empty() {
        return Ok(1.0);
    }
    let cut: f64 = members
        .iter()
        .flat_map(|&i| rest.iter().map(move |&j| g[(i, j)]))
        .sum();
    let denom = volume(g, &members).min(volume(g, &rest));
    if denom <= 0.0 {
        return Ok(1.0);
    }
    Ok((cut / denom).clamp(0.0, 1.0))
}

/// Fraction of nodes in communities with conductance strictly below `alpha`.
pub fn coverage(g: &Matrix, p: &Partition, alpha: f64) -> Result<f64> {
    if g.nrows() != p.num_nodes() {
        return dim_err(format!(
            "graph has {} nodes, partition {}",
            g.nrows(),
            p.num_nodes()
        ));
    }
    let mut covered = 0;
    for set in p.cover_sets() {
        if !set.is_empty() && conductance(g, &set)? < alpha {
            covered += set.len();
        }
    }
    Ok(covered as f64 / p.num_nodes().max(1) as f64)
}

/// `(alpha, coverage(alpha))` on the grid `0, 0.1, ..., 1`.
pub fn coverage_curve(g: &Matrix, p: &Partition) -> Result<Vec<(f64, f64)>> {
    (0..=10)
        .map(|k| {
            let alpha = k as f64 / 10.0;
            coverage(g, p, alpha).map(|c| (alpha, c))
        })
        .collect()
}

/// `||x_hat - x||^2 / ||x||^2`, optionally restricted to the entries a
/// scope mask marks `true`.
pub fn nmse(x_hat: &Tensor3, x_true: &Tensor3, scope: Option<&Mask3>) -> Result<f64> {
    if x_hat.dims() != x_true.dims() {
        return dim_err(format!(
            "tensor dims {:?} vs {:?}",
            x_hat.dims(),
            x_true.dims()
        ));
    }
    if let Some(m) = scope {
        if m.dims() != x_true.dims() {
            return dim_err("scope mask dims differ");
        }
    }
    let in_scope = |idx: usize| scope.is_none_or(|m| m.flags()[idx]);
    let (mut err, mut energy) = (0.0, 0.0);
    for (idx, (&a, &b)) in x_hat.values().iter().zip(x_true.values()).enumerate() {
        if in_scope(idx) {
            err += (a - b) * (a - b);
            energy += b * b;
        }
    }
    Ok(err / energy)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub threshold: f64,
    pub tpr: f64,
    pub fpr: f64,
}

/// Detection sweep: a score `>= threshold` counts as a positive call.
/// Thresholds form a uniform grid of `num_thresholds` points over
/// `[min score, max score]`, swept from high to low, bracketed by the
/// `(0, 0)` and `(1, 1)` endpoints.
pub fn roc_sweep(scores: &[f64], truth: &[bool], num_thresholds: usize) -> Result<Vec<RocPoint>> {
    if scores.len() != truth.len() {
        return dim_err(format!("{} scores vs {} labels", scores.len(), truth.len()));
    }
    let pos = truth.iter().filter(|&&t| t).count();
    let neg = truth.len() - pos;
    let rate = |hits: usize, total: usize| {
        if total == 0 {
            0.0
        } else {
            hits as f64 / total as f64
        }
    };
    let mut out = vec![RocPoint {
        threshold: f64::INFINITY,
        tpr: 0.0,
        fpr: 0.0,
    }];
    if !scores.is_empty() {
        let lo = scores.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let steps = num_thresholds.max(1);
        for s in 0..steps {
            let threshold = if steps == 1 || hi == lo {
                hi
            } else {
                hi - (hi - lo) * s as f64 / (steps - 1) as f64
            };
            let (mut tp, mut fp) = (0, 0);
            for (&sc, &t) in scores.iter().zip(truth) {
                if sc >= threshold {
                    if t {
                        tp += 1;
                    } else {
                        fp += 1;
                    }
                }
            }
            out.push(RocPoint {
                threshold,
                tpr: rate(tp, pos),
                fpr: rate(fp, neg),
            });
        }
    }
    out.push(RocPoint {
        threshold: f64::NEG_INFINITY,
        tpr: 1.0,
        fpr: 1.0,
    });
    Ok(out)
}
