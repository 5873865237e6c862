//! Objective, augmented Lagrangian and KKT residual.
//!
//! The Lagrangian carries a factor 1/2 on both least-squares terms; with that
//! scaling the closed-form block updates are its exact block minimizers.

use super::model::{scale_columns, AdmmState, Completion, FactorModel};
use crate::multilinear::{cp_reconstruct, mttkrp, other_modes, Matrix};

/// `||X - [[A_1, A_2, A_3]]||^2 + mu * sum_n ||G_n - A_n diag(d_n) A_n^T||^2`
/// over the present graphs, against the working completions.
pub fn objective(model: &FactorModel, work: &Completion, mu: f64) -> f64 {
    let recon = model.reconstruct();
    let tensor_fit: f64 = work
        .tensor
        .values()
        .iter()
        .zip(recon.values())
        .map(|(x, r)| (x - r).powi(2))
        .sum();
    let graph_fit: f64 = (0..3)
        .filter_map(|n| {
            work.graphs[n]
                .as_ref()
                .map(|g| (g - model.graph(n)).norm_squared())
        })
        .sum();
    tensor_fit + mu * graph_fit
}

/// Augmented Lagrangian of the split problem at `state`, with the working
/// completions held fixed. Graph-free modes contribute neither the graph fit
/// nor the `A_n = Ā_n` coupling.
pub fn augmented_lagrangian(state: &AdmmState, work: &Completion) -> f64 {
    let a = &state.primal.factors;
    let recon = cp_reconstruct([&a[0], &a[1], &a[2]]).expect("consistent state");
    let mut total = 0.5
        * work
            .tensor
            .values()
            .iter()
            .zip(recon.values())
            .map(|(x, r)| (x - r).powi(2))
            .sum::<f64>();
    let rho = state.penalties;
    for n in 0..3 {
        let tilde_gap = &a[n] - &state.factors_tilde[n];
        total += state.dual_tilde[n].dot(&tilde_gap) + 0.5 * rho.tilde * tilde_gap.norm_squared();
        let w_gap = &state.primal.weights[n] - &state.weights_tilde[n];
        total += state.dual_weights[n].dot(&w_gap) + 0.5 * rho.weights * w_gap.norm_squared();
        if let Some(g) = &work.graphs[n] {
            let s =
                scale_columns(&a[n], &state.primal.weights[n]) * state.factors_bar[n].transpose();
            total += 0.5 * state.mu * (g - s).norm_squared();
            let bar_gap = &a[n] - &state.factors_bar[n];
            total += state.dual_bar[n].dot(&bar_gap) + 0.5 * rho.bar * bar_gap.norm_squared();
        }
    }
    total
}

fn ratio(residual: f64, scale: f64) -> f64 {
    residual / (1.0 + scale)
}

/// Largest normalized violation of the KKT system of the split problem:
/// block stationarity, primal feasibility, multiplier signs and
/// complementarity. Zero exactly at a KKT point.
pub fn kkt_residual(state: &AdmmState, work: &Completion) -> f64 {
    let a = &state.primal.factors;
    let refs = [&a[0], &a[1], &a[2]];
    let mut worst: f64 = 0.0;
    for n in 0..3 {
        let an = &a[n];
        let d = &state.primal.weights[n];
        let (p, q) = other_modes(n);
        let gram = (a[p].transpose() * &a[p]).component_mul(&(a[q].transpose() * &a[q]));
        let xm = mttkrp(&work.tensor, refs, n).expect("consistent state");
        let amm = an * gram;
        let y_t = &state.dual_tilde[n];

        // stationarity in A_n
        let mut grad: Matrix = &xm - &amm - y_t;
        let mut scale = xm.norm() + amm.norm() + y_t.norm();

        if let Some(g) = &work.graphs[n] {
            let bar = &state.factors_bar[n];
            let y_b = &state.dual_bar[n];
            let mu = state.mu;
            let bar_d = scale_columns(bar, d);
            let a_d = scale_columns(an, d);
            let s = &a_d * bar.transpose();
            let resid = g - &s;

            grad += mu * &resid * &bar_d - y_b;
            scale += mu * (g * &bar_d).norm() + mu * (&s * &bar_d).norm() + y_b.norm();

            // stationarity in d_n: mu (Ā ⊙ A)^T (g - (Ā ⊙ A) d) - y_d
            let cross = an.transpose() * &resid * bar;
            let y_d = &state.dual_weights[n];
            let stat_d = (0..d.len()).map(|r| mu * cross[(r, r)] - y_d[r]);
            let stat_d = stat_d.map(|v| v * v).sum::<f64>().sqrt();
            let g_cross = an.transpose() * g * bar;
            let g_scale = (0..d.len())
                .map(|r| (mu * g_cross[(r, r)]).powi(2))
                .sum::<f64>()
                .sqrt();
            worst = worst.max(ratio(stat_d, g_scale + y_d.norm()));

            // stationarity in Ā_n: mu (G^T - Ā D A^T) A D + Y_Ā
            let stat_bar = mu * (g.transpose() - s.transpose()) * &a_d + y_b;
            let bar_scale = mu * (g.transpose() * &a_d).norm() + y_b.norm();
            worst = worst.max(ratio(stat_bar.norm(), bar_scale));

            worst = worst.max(ratio((an - bar).norm(), an.norm()));
        }
        worst = worst.max(ratio(grad.norm(), scale));

        let tilde = &state.factors_tilde[n];
        worst = worst.max(ratio((an - tilde).norm(), an.norm()));
        let d_t = &state.weights_tilde[n];
        worst = worst.max(ratio((d - d_t).norm(), d.norm()));

        // signs: Y_Ã <= 0 <= Ã, y_d <= 0 <= d̃
        let y_d = &state.dual_weights[n];
        let pos_y = y_t.map(|v| v.max(0.0)).norm() + y_d.map(|v| v.max(0.0)).norm();
        worst = worst.max(ratio(pos_y, y_t.norm() + y_d.norm()));
        let neg_aux = tilde.map(|v| (-v).max(0.0)).norm() + d_t.map(|v| (-v).max(0.0)).norm();
        worst = worst.max(ratio(neg_aux, tilde.norm() + d_t.norm()));

        // complementarity
        let comp = y_t.component_mul(tilde).norm() + y_d.component_mul(d_t).norm();
        worst = worst.max(ratio(
            comp,
            y_t.norm() * tilde.norm() + y_d.norm() * d_t.norm(),
        ));
    }
    worst
}
