//! Tabular stochastic shortest path primitives.
//!
//! The goal state is never stored: for every state-action pair the mass
//! missing from `trans(s, a)` is the probability of reaching the goal, and the
//! goal carries value zero. All routines here are pure functions of their
//! inputs and are used both as the regret oracle and inside the optimistic
//! planner.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack allowed on row sums of a transition table.
pub const MASS_TOLERANCE: f64 = 1e-9;

/// Values above this cap are treated as divergence of policy evaluation.
pub const DEFAULT_VALUE_CAP: f64 = 1e9;

/// Iteration budget used when a caller does not provide one.
pub const DEFAULT_MAX_ITER: usize = 1_000_000;

/// Residual tolerance used when a caller does not provide one.
pub const DEFAULT_TOL: f64 = 1e-9;

/// A finite SSP with an implicit absorbing, cost-free goal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SspInstance {
    n_states: usize,
    n_actions: usize,
    /// Row-major `(s, a)` table of expected losses.
    loss: Vec<f64>,
    /// Row-major `(s, a, s')` table of transition probabilities to non-goal states.
    trans: Vec<f64>,
}

impl SspInstance {
    /// Builds an instance after checking shapes and the probability/loss ranges.
    pub fn new(n_states: usize, n_actions: usize, loss: Vec<f64>, trans: Vec<f64>) -> Result<Self> {
        let ssp = Self::new_unchecked(n_states, n_actions, loss, trans)?;
        ssp.validate()?;
        Ok(ssp)
    }

    /// Builds an instance checking only the table shapes.
    pub(crate) fn new_unchecked(
        n_states: usize,
        n_actions: usize,
        loss: Vec<f64>,
        trans: Vec<f64>,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::Dimension("an SSP needs at least one state and one action".into()));
        }
        if loss.len() != n_states * n_actions {
            return Err(Error::Dimension(format!(
                "loss table has {} entries, expected {}",
                loss.len(),
                n_states * n_actions
            )));
        }
        if trans.len() != n_states * n_actions * n_states {
            return Err(Error::Dimension(format!(
                "transition table has {} entries, expected {}",
                trans.len(),
                n_states * n_actions * n_states
            )));
        }
        Ok(Self { n_states, n_actions, loss, trans })
    }

    /// Checks the sub-stochastic and loss-range invariants.
    pub fn validate(&self) -> Result<()> {
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                let l = self.loss(s, a);
                if !(0.0..=1.0).contains(&l) {
                    return Err(Error::Config(format!("loss({s},{a}) = {l} outside [0, 1]")));
                }
                let row = self.trans_row(s, a);
                if let Some(p) = row.iter().find(|p| **p < 0.0 || !p.is_finite()) {
                    return Err(Error::Config(format!("negative transition entry {p} at ({s},{a})")));
                }
                let mass: f64 = row.iter().sum();
                if mass > 1.0 + MASS_TOLERANCE {
                    return Err(Error::Config(format!("transition mass {mass} > 1 at ({s},{a})")));
                }
            }
        }
        Ok(())
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    #[inline]
    pub fn loss(&self, s: usize, a: usize) -> f64 {
        self.loss[s * self.n_actions + a]
    }

    /// Probabilities of moving to each non-goal state.
    #[inline]
    pub fn trans_row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.n_actions + a) * self.n_states;
        &self.trans[start..start + self.n_states]
    }

    /// Residual probability of moving to the goal.
    pub fn goal_mass(&self, s: usize, a: usize) -> f64 {
        1.0 - self.trans_row(s, a).iter().sum::<f64>()
    }

    /// Smallest goal mass over all state-action pairs.
    pub fn min_goal_mass(&self) -> f64 {
        (0..self.n_states)
            .flat_map(|s| (0..self.n_actions).map(move |a| (s, a)))
            .map(|(s, a)| self.goal_mass(s, a))
            .fold(f64::INFINITY, f64::min)
    }

    /// `loss(s,a) + Σ_{s'} trans(s,a)[s'] · v(s')`.
    #[inline]
    pub fn q_value(&self, v: &[f64], s: usize, a: usize) -> f64 {
        self.loss(s, a) + dot(self.trans_row(s, a), v)
    }

    /// The same transitions with every loss replaced by `loss`.
    pub fn with_constant_loss(&self, loss: f64) -> Self {
        Self {
            n_states: self.n_states,
            n_actions: self.n_actions,
            loss: vec![loss; self.loss.len()],
            trans: self.trans.clone(),
        }
    }
}

/// Stationary deterministic policy.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Policy(Vec<usize>);

impl Policy {
    pub fn new(actions: Vec<usize>, n_actions: usize) -> Result<Self> {
        if let Some(a) = actions.iter().find(|a| **a >= n_actions) {
            return Err(Error::Dimension(format!("action {a} out of range (n_actions = {n_actions})")));
        }
        Ok(Self(actions))
    }

    /// Policy playing action `a` in every state.
    pub fn constant(n_states: usize, a: usize) -> Self {
        Self(vec![a; n_states])
    }

    #[inline]
    pub fn action(&self, s: usize) -> usize {
        self.0[s]
    }

    pub fn actions(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Enumerates all `n_actions^n_states` deterministic policies.
    pub fn enumerate(n_states: usize, n_actions: usize) -> impl Iterator<Item = Policy> {
        let total = (n_actions as u64).pow(n_states as u32);
        (0..total).map(move |mut code| {
            let mut actions = Vec::with_capacity(n_states);
            for _ in 0..n_states {
                actions.push((code % n_actions as u64) as usize);
                code /= n_actions as u64;
            }
            Policy(actions)
        })
    }

    fn check(&self, ssp: &SspInstance) -> Result<()> {
        if self.0.len() != ssp.n_states() {
            return Err(Error::Dimension(format!(
                "policy covers {} states, SSP has {}",
                self.0.len(),
                ssp.n_states()
            )));
        }
        if let Some(a) = self.0.iter().find(|a| **a >= ssp.n_actions()) {
            return Err(Error::Dimension(format!("policy uses action {a} outside the action set")));
        }
        Ok(())
    }
}

/// Values of the non-goal states; the goal has value zero and is not stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueFunction(pub Vec<f64>);

impl ValueFunction {
    pub fn zeros(n_states: usize) -> Self {
        Self(vec![0.0; n_states])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn sup_distance(&self, other: &ValueFunction) -> f64 {
        sup_distance(&self.0, &other.0)
    }
}

impl std::ops::Index<usize> for ValueFunction {
    type Output = f64;

    fn index(&self, s: usize) -> &f64 {
        &self.0[s]
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn sup_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Lowest-index minimizer of `Q(s, ·)` under `v`, together with the minimum.
fn best_action(ssp: &SspInstance, v: &[f64], s: usize) -> (usize, f64) {
    let mut best = (0, ssp.q_value(v, s, 0));
    for a in 1..ssp.n_actions() {
        let q = ssp.q_value(v, s, a);
        if q < best.1 {
            best = (a, q);
        }
    }
    best
}

/// One application of the Bellman optimality operator.
pub fn bellman_backup(v: &ValueFunction, ssp: &SspInstance) -> Result<ValueFunction> {
    if v.len() != ssp.n_states() {
        return Err(Error::Dimension(format!(
            "value function has {} entries, SSP has {} states",
            v.len(),
            ssp.n_states()
        )));
    }
    Ok(ValueFunction((0..ssp.n_states()).map(|s| best_action(ssp, &v.0, s).1).collect()))
}

/// Greedy policy with respect to `v`, ties broken by lowest action index.
pub fn greedy_policy(ssp: &SspInstance, v: &ValueFunction) -> Policy {
    Policy((0..ssp.n_states()).map(|s| best_action(ssp, &v.0, s).0).collect())
}

/// Value iteration from the zero function.
///
/// Returns a value function whose Bellman residual is at most `tol` and the
/// greedy policy with respect to it.
pub fn value_iteration(ssp: &SspInstance, tol: f64, max_iter: usize) -> Result<(ValueFunction, Policy)> {
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::Config(format!("tolerance must be positive, got {tol}")));
    }
    let mut v = ValueFunction::zeros(ssp.n_states());
    let mut residual = f64::INFINITY;
    for _ in 0..max_iter {
        let next = bellman_backup(&v, ssp)?;
        residual = next.sup_distance(&v);
        v = next;
        // The backup is non-expansive in sup-norm, so the new iterate's
        // residual is bounded by the step just taken.
        if residual <= tol {
            let pi = greedy_policy(ssp, &v);
            return Ok((v, pi));
        }
    }
    Err(Error::NonConvergence { iterations: max_iter, residual })
}

/// Iterative evaluation of `pi` with the default divergence cap.
pub fn policy_evaluation(ssp: &SspInstance, pi: &Policy, tol: f64, max_iter: usize) -> Result<ValueFunction> {
    policy_evaluation_capped(ssp, pi, tol, max_iter, DEFAULT_VALUE_CAP)
}

/// Solves `V = ℓ_π + P_π V` by fixed-point iteration from zero.
///
/// Any entry exceeding `value_cap`, or running out of iterations, is reported
/// as an improper policy.
pub fn policy_evaluation_capped(
    ssp: &SspInstance,
    pi: &Policy,
    tol: f64,
    max_iter: usize,
    value_cap: f64,
) -> Result<ValueFunction> {
    pi.check(ssp)?;
    let n = ssp.n_states();
    let mut v = vec![0.0; n];
    let mut next = vec![0.0; n];
    for _ in 0..max_iter {
        for (s, out) in next.iter_mut().enumerate() {
            *out = ssp.q_value(&v, s, pi.action(s));
        }
        let residual = sup_distance(&next, &v);
        std::mem::swap(&mut v, &mut next);
        if let Some(x) = v.iter().find(|x| x.is_nan() || **x > value_cap) {
            return Err(Error::ImproperPolicy(format!("value {x:e} exceeded cap {value_cap:e}")));
        }
        if residual <= tol {
            return Ok(ValueFunction(v));
        }
    }
    Err(Error::ImproperPolicy(format!("policy evaluation did not settle within {max_iter} iterations")))
}

/// Expected number of steps until the goal under `pi`, from every state.
pub fn expected_hitting_time(ssp: &SspInstance, pi: &Policy) -> Result<ValueFunction> {
    policy_evaluation(&ssp.with_constant_loss(1.0), pi, DEFAULT_TOL, DEFAULT_MAX_ITER)
}

/// Whether `pi` reaches the goal with probability one from every state.
pub fn is_proper(ssp: &SspInstance, pi: &Policy) -> Result<bool> {
    pi.check(ssp)?;
    match expected_hitting_time(ssp, pi) {
        Ok(_) => Ok(true),
        Err(Error::ImproperPolicy(_)) => Ok(false),
        Err(e) => Err(e),
    }
}
