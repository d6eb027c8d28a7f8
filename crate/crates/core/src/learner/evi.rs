//! Optimistic planning by extended value iteration.
//!
//! For a fixed context the loss confidence set at a pair reduces to an
//! interval whose lower end is `⟨c, L̂⟩ − β_ℓ‖c‖_{V̄⁻¹}`. The transition set is
//! relaxed to the L1 ball of radius `β_P‖c‖_{V̄⁻¹}` around `P̂c` (measured on
//! the non-goal states) intersected with the sub-distributions; its inner
//! minimization has a closed form.

use std::cmp::Ordering;

use super::config::LearnerConfig;
use crate::error::Result;
use crate::estimation::{Estimates, PairEstimate};
use crate::model::Context;
use crate::ssp::{dot, sup_distance, Policy, SspInstance, ValueFunction};

/// `clip(⟨c, L̂⟩ − β_ℓ‖c‖_{V̄⁻¹}, 0, 1)`.
pub fn optimistic_loss(c: &Context, est: &PairEstimate) -> f64 {
    (est.mean_loss(c) - est.beta_loss * est.context_norm(c)).clamp(0.0, 1.0)
}

/// L1 radius of the relaxed transition set at a pair.
pub fn transition_radius(c: &Context, est: &PairEstimate) -> f64 {
    est.beta_dyn * est.context_norm(c)
}

/// Writes into `out` a minimizer of `qᵀv` over sub-distributions `q` with
/// `‖q − center‖₁ ≤ radius`.
///
/// Every unit of budget removed from a state and handed to the goal (value
/// zero) lowers the objective by that state's value, which beats moving it to
/// any other state, so mass is stripped from the highest-valued states first.
/// `order` is scratch space.
pub fn min_over_l1_ball(center: &[f64], radius: f64, v: &[f64], order: &mut Vec<usize>, out: &mut [f64]) {
    out.copy_from_slice(center);
    order.clear();
    order.extend(0..center.len());
    order.sort_by(|a, b| v[*b].partial_cmp(&v[*a]).unwrap_or(Ordering::Equal).then(a.cmp(b)));
    let mut budget = radius.max(0.0);
    for &s in order.iter() {
        if budget <= 0.0 || v[s] <= 0.0 {
            break;
        }
        let take = out[s].min(budget);
        out[s] -= take;
        budget -= take;
    }
}

/// Output of [`evi_plan`].
#[derive(Debug, Clone, PartialEq)]
pub struct EviPlan {
    pub policy: Policy,
    /// Optimistic losses and transitions chosen at the final iterate.
    pub optimistic: SspInstance,
    pub values: ValueFunction,
    /// Sup-norm change of the last sweep.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

struct PairInputs {
    loss: f64,
    center: Vec<f64>,
    radius: f64,
}

/// Extended value iteration over the confidence sets at context `c`.
///
/// Iterates start at zero, are truncated to `[0, b_cap]` and stop when a
/// sweep changes no value by more than `cfg.evi_tol`, or after
/// `cfg.evi_max_iter` sweeps, in which case the last iterate is returned with
/// `converged = false`.
pub fn evi_plan(est: &Estimates, c: &Context, b_cap: f64, cfg: &LearnerConfig) -> Result<EviPlan> {
    let n = est.shape.n_states;
    let m = est.shape.n_actions;
    let inputs: Vec<PairInputs> = est
        .pairs
        .iter()
        .map(|pair| PairInputs {
            loss: optimistic_loss(c, pair),
            center: pair.trans_probs(c),
            radius: transition_radius(c, pair),
        })
        .collect();

    let mut order = Vec::with_capacity(n);
    let mut q = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < cfg.evi_max_iter {
        iterations += 1;
        for s in 0..n {
            let mut best = f64::INFINITY;
            for a in 0..m {
                let pair = &inputs[s * m + a];
                min_over_l1_ball(&pair.center, pair.radius, &v, &mut order, &mut q);
                best = best.min(pair.loss + dot(&q, &v));
            }
            next[s] = best.clamp(0.0, b_cap);
        }
        residual = sup_distance(&next, &v);
        std::mem::swap(&mut v, &mut next);
        if residual <= cfg.evi_tol {
            converged = true;
            break;
        }
    }

    let mut actions = Vec::with_capacity(n);
    let mut losses = Vec::with_capacity(n * m);
    let mut trans = Vec::with_capacity(n * m * n);
    for s in 0..n {
        let mut best = (0, f64::INFINITY);
        for a in 0..m {
            let pair = &inputs[s * m + a];
            min_over_l1_ball(&pair.center, pair.radius, &v, &mut order, &mut q);
            let value = pair.loss + dot(&q, &v);
            if value < best.1 {
                best = (a, value);
            }
            losses.push(pair.loss);
            trans.extend(q.iter().map(|x| x.max(0.0)));
        }
        actions.push(best.0);
    }
    Ok(EviPlan {
        policy: Policy::new(actions, m)?,
        optimistic: SspInstance::new(n, m, losses, trans)?,
        values: ValueFunction(v),
        residual,
        iterations,
        converged,
    })
}
