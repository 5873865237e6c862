//! Factor initialization.

use rand::Rng as _;

use super::model::ObservedGraph;
use crate::error::{Error, Result};
use crate::multilinear::{cp_reconstruct, mask_project, Keep, Matrix, ObservedTensor};
use crate::seed::{self, Rng};

pub const SNMF_ITERS: usize = 2000;

fn uniform_matrix(rows: usize, cols: usize, rng: &mut Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random::<f64>())
}

/// Symmetric NMF `G ≈ A A^T`, `A >= 0`, by alternating HALS updates on the
/// relaxed pair `G ≈ A B^T` with a coupling penalty `alpha ||A - B||^2`.
/// Unobserved entries count as zeros. An all-zero graph yields a small
/// positive random matrix.
pub fn snmf_init(g: &ObservedGraph, rank: usize, seed: u64) -> Result<Matrix> {
    if !g.is_present() {
        return Err(Error::Config(
            "SNMF initialization needs a present graph".into(),
        ));
    }
    let n = g.n();
    if rank == 0 || rank > n {
        return Err(Error::Config(format!(
            "SNMF rank {rank} must be in 1..={n}"
        )));
    }
    let mut rng = seed::stream(seed, "snmf");
    let gv = g.values();
    let g_norm = gv.norm();
    let start = uniform_matrix(n, rank, &mut rng);
    if g_norm == 0.0 {
        return Ok(start.map(|v| 1e-3 * (v + 1e-3)));
    }
    let fit = (&start * start.transpose()).norm();
    let mut a = start * (g_norm / fit).sqrt();
    let mut b = a.clone();
    let alpha = gv.max().max(f64::EPSILON);

    for _ in 0..SNMF_ITERS {
        hals_sweep(gv, &mut a, &b, alpha);
        hals_sweep(gv, &mut b, &a, alpha);
    }
    Ok((a + b) * 0.5)
}

/// One pass of column updates of `x` in `min ||G - x y^T||^2 + alpha ||x - y||^2`.
fn hals_sweep(g: &Matrix, x: &mut Matrix, y: &Matrix, alpha: f64) {
    let gy = g * y;
    let yty = y.transpose() * y;
    for r in 0..x.ncols() {
        let denom = yty[(r, r)] + alpha;
        for i in 0..x.nrows() {
            let mut num = gy[(i, r)] + alpha * y[(i, r)];
            for s in 0..x.ncols() {
                if s != r {
                    num -= x[(i, s)] * yty[(s, r)];
                }
            }
            x[(i, r)] = (num / denom).max(0.0);
        }
    }
}

/// Uniform `[0, 1)` factor, for modes without a usable graph.
pub fn random_factor(rows: usize, rank: usize, seed: u64) -> Matrix {
    uniform_matrix(rows, rank, &mut seed::stream(seed, "random-factor"))
}

/// Rescales the modes in `which` by a common factor so the CP reconstruction
/// best matches the observed entries in least squares.
pub fn rescale_to_data(factors: &mut [Matrix; 3], which: &[usize], data: &ObservedTensor) {
    if which.is_empty() {
        return;
    }
    let recon = cp_reconstruct([&factors[0], &factors[1], &factors[2]]).expect("consistent");
    let recon = mask_project(&recon, data.mask(), Keep::Observed).expect("consistent");
    let rr: f64 = recon.values().iter().map(|v| v * v).sum();
    let xr: f64 = recon
        .values()
        .iter()
        .zip(data.data().values())
        .map(|(r, x)| r * x)
        .sum();
    if rr <= 0.0 || xr <= 0.0 {
        return;
    }
    let c = (xr / rr).powf(1.0 / which.len() as f64);
    for &n in which {
        factors[n] *= c;
    }
}

/// Largest rank for which component alignment searches all permutations.
const ALIGN_EXHAUSTIVE_MAX_RANK: usize = 6;

/// Reorders the columns of modes 1 and 2 so that the components of
/// independently initialized factors line up with those of mode 0.
///
/// Each candidate triple `(r, s, t)` is scored by the cosine between the
/// observed data and the rank-one term `a_r ∘ b_s ∘ c_t`; the assignment
/// with the largest total score wins.
pub fn align_components(factors: &mut [Matrix; 3], data: &ObservedTensor) {
    let rank = factors[0].ncols();
    if rank < 2 {
        return;
    }
    let x = data.data();
    let [i1, i2, i3] = x.dims();
    let (a, b, c) = (&factors[0], &factors[1], &factors[2]);
    // w[(r, j + i2 * k)] = sum_i x_ijk a_ir
    let mut w = Matrix::zeros(rank, i2 * i3);
    for k in 0..i3 {
        for j in 0..i2 {
            for i in 0..i1 {
                let v = x.get(i, j, k);
                if v != 0.0 {
                    for r in 0..rank {
                        w[(r, j + i2 * k)] += v * a[(i, r)];
                    }
                }
            }
        }
    }
    let norms = |m: &Matrix| -> Vec<f64> {
        m.column_iter()
            .map(|col| col.norm().max(f64::MIN_POSITIVE))
            .collect()
    };
    let (na, nb, nc) = (norms(a), norms(b), norms(c));
    let mut score = vec![0.0; rank * rank * rank];
    for r in 0..rank {
        for s in 0..rank {
            for t in 0..rank {
                let mut acc = 0.0;
                for k in 0..i3 {
                    for j in 0..i2 {
                        acc += w[(r, j + i2 * k)] * b[(j, s)] * c[(k, t)];
                    }
                }
                score[r + rank * (s + rank * t)] = acc / (na[r] * nb[s] * nc[t]);
            }
        }
    }
    let at = |r: usize, s: usize, t: usize| score[r + rank * (s + rank * t)];

    let (perm_b, perm_c) = if rank <= ALIGN_EXHAUSTIVE_MAX_RANK {
        let perms = permutations(rank);
        let mut best = (f64::NEG_INFINITY, 0, 0);
        for (pi, p) in perms.iter().enumerate() {
            for (qi, q) in perms.iter().enumerate() {
                let total: f64 = (0..rank).map(|r| at(r, p[r], q[r])).sum();
                if total > best.0 {
                    best = (total, pi, qi);
                }
            }
        }
        (perms[best.1].clone(), perms[best.2].clone())
    } else {
        let mut p = vec![usize::MAX; rank];
        let mut q = vec![usize::MAX; rank];
        for _ in 0..rank {
            let mut best = (f64::NEG_INFINITY, 0, 0, 0);
            for r in (0..rank).filter(|&r| p[r] == usize::MAX) {
                for s in (0..rank).filter(|s| !p.contains(s)) {
                    for t in (0..rank).filter(|t| !q.contains(t)) {
                        if at(r, s, t) > best.0 {
                            best = (at(r, s, t), r, s, t);
                        }
                    }
                }
            }
            p[best.1] = best.2;
            q[best.1] = best.3;
        }
        (p, q)
    };
    factors[1] = Matrix::from_fn(i2, rank, |j, r| factors[1][(j, perm_b[r])]);
    factors[2] = Matrix::from_fn(i3, rank, |k, r| factors[2][(k, perm_c[r])]);
}

/// All permutations of `0..n` in lexicographic order.
fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut p: Vec<usize> = (0..n).collect();
    loop {
        out.push(p.clone());
        let Some(i) = (1..n).rev().find(|&i| p[i - 1] < p[i]) else {
            return out;
        };
        let j = (i..n)
            .rev()
            .find(|&j| p[j] > p[i - 1])
            .expect("pivot exists");
        p.swap(i - 1, j);
        p[i..].reverse();
    }
}
