//! Diagnostics of the high-probability event: interval-loss bounds, unknown
//! trigger counts, counting identities and a replay of every known test.

use serde::{Deserialize, Serialize};

use super::oracle::OracleReport;
use crate::error::{Error, Result};
use crate::estimation::{known_threshold, SaStatistics};
use crate::learner::{ContextMode, RunLog};
use crate::model::Context;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HpeReport {
    /// `M`.
    pub intervals: u64,
    /// Intervals whose loss exceeds `48 B*_emp ln(4m/δ)`.
    pub violations: u64,
    pub violation_fraction: f64,
    /// Unknown triggers per pair, indexed by `s·|A| + a`.
    pub pair_triggers: Vec<u64>,
    pub max_pair_triggers: u64,
    /// `K + |S||A| · max_pair_triggers`.
    pub interval_bound: u64,
    /// `M ≤ interval_bound`.
    pub interval_bound_holds: bool,
    /// `T = Σ I_k` and `M = Σ intervals_started`, against the run totals.
    pub totals_consistent: bool,
    /// Steps whose logged known flag differs from the replayed test.
    pub known_mismatches: u64,
    /// Intervals whose trigger does not match the replayed known test.
    pub trigger_mismatches: u64,
}

impl HpeReport {
    /// Every exact identity holds and the replay matches the log.
    pub fn identities_hold(&self) -> bool {
        self.interval_bound_holds && self.totals_consistent && self.known_mismatches == 0 && self.trigger_mismatches == 0
    }
}

/// `48 B* ln(4m/δ)`.
pub fn interval_loss_bound(b_star: f64, m: u64, delta: f64) -> f64 {
    48.0 * b_star * (4.0 * m as f64 / delta).ln()
}

/// Checks the interval-loss bound, counts unknown triggers and replays the
/// known tests of `log`.
pub fn hpe_diagnostics(log: &RunLog, oracle: &OracleReport, delta: f64) -> Result<HpeReport> {
    if log.episodes.len() != oracle.per_episode.len() {
        return Err(Error::Dimension(format!(
            "run has {} episodes, oracle has {}",
            log.episodes.len(),
            oracle.per_episode.len()
        )));
    }
    let shape = log.shape;
    let mut pair_triggers = vec![0u64; shape.n_states * shape.n_actions];
    let mut intervals = 0u64;
    let mut violations = 0u64;
    for ep in &log.episodes {
        for iv in &ep.intervals {
            intervals += 1;
            if iv.loss > interval_loss_bound(oracle.b_star_emp, iv.index, delta) {
                violations += 1;
            }
            if let Some((s, a)) = iv.trigger_pair {
                pair_triggers[s * shape.n_actions + a] += 1;
            }
        }
    }
    let max_pair_triggers = pair_triggers.iter().copied().max().unwrap_or(0);
    let interval_bound = log.episodes.len() as u64 + (pair_triggers.len() as u64) * max_pair_triggers;
    let steps: u64 = log.episodes.iter().map(|e| e.steps).sum();
    let started: u64 = log.episodes.iter().map(|e| e.intervals_started).sum();
    let totals_consistent = steps == log.totals.steps
        && started == log.totals.intervals
        && started == intervals
        && log.episodes.iter().all(|e| e.trace.len() as u64 == e.steps);
    let (known_mismatches, trigger_mismatches) = replay_known_tests(log)?;
    Ok(HpeReport {
        intervals,
        violations,
        violation_fraction: if intervals == 0 { 0.0 } else { violations as f64 / intervals as f64 },
        pair_triggers,
        max_pair_triggers,
        interval_bound,
        interval_bound_holds: intervals <= interval_bound,
        totals_consistent,
        known_mismatches,
        trigger_mismatches,
    })
}

/// Rebuilds the per-pair statistics from the step trace (resetting them at
/// every doubling), freezes them at each interval start and re-evaluates the
/// known test of every step. Returns the number of steps whose flag differs
/// and the number of intervals whose trigger is inconsistent with the
/// replayed flags.
pub fn replay_known_tests(log: &RunLog) -> Result<(u64, u64)> {
    let shape = log.shape;
    let cfg = &log.config;
    let n_pairs = shape.n_states * shape.n_actions;
    let mut stats: Vec<SaStatistics> =
        (0..n_pairs).map(|_| SaStatistics::new(shape.d, shape.n_states, cfg.lambda)).collect();
    let blind = Context::uniform(shape.d);
    let mut known_mismatches = 0;
    let mut trigger_mismatches = 0;

    for ep in &log.episodes {
        let c = match log.mode {
            ContextMode::Aware => &ep.context,
            ContextMode::Blind => &blind,
        };
        let mut cursor = 0usize;
        for (i, iv) in ep.intervals.iter().enumerate() {
            if iv.doublings > 0 {
                stats.iter_mut().for_each(SaStatistics::reset);
            }
            let frozen: Vec<(u64, f64)> = stats.iter().map(|st| (st.tau(), st.context_norm(c))).collect();
            let end = cursor + iv.steps as usize;
            let steps = ep
                .trace
                .get(cursor..end)
                .ok_or_else(|| Error::Dimension(format!("episode {} trace is shorter than its intervals", ep.episode)))?;
            for step in steps {
                let p = step.state * shape.n_actions + step.action;
                let (tau, norm) = frozen[p];
                let threshold =
                    known_threshold(tau, &shape, cfg.lambda, log.l_min_effective, iv.b_star_cur, iv.index, cfg.delta);
                if (norm < threshold) != step.known {
                    known_mismatches += 1;
                }
                stats[p].record_visit(c, step.next, step.observed_loss);
            }
            // The interval ends at the goal, at truncation, or on an unknown
            // non-goal step that opens the next one.
            let last = steps.last();
            let consistent = match ep.intervals.get(i + 1) {
                Some(next) => {
                    let pair_matches = last.map(|s| Some((s.state, s.action)) == next.trigger_pair).unwrap_or(false);
                    last.is_some_and(|s| !s.known && s.next.is_some()) && pair_matches
                }
                None => match last {
                    None => ep.truncated,
                    Some(s) => s.next.is_none() || (ep.truncated && s.known),
                },
            };
            let inner_known = steps[..steps.len().saturating_sub(1)].iter().all(|s| s.known);
            if !consistent || !inner_known {
                trigger_mismatches += 1;
            }
            cursor = end;
        }
        if cursor != ep.trace.len() {
            return Err(Error::Dimension(format!("episode {} trace is longer than its intervals", ep.episode)));
        }
    }
    Ok((known_mismatches, trigger_mismatches))
}
