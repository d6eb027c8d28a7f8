use serde::{Deserialize, Serialize};

use super::agent::ContextMode;
use super::config::LearnerConfig;
use crate::estimation::ConfidenceShape;
use crate::model::Context;

/// Why an interval was started.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trigger {
    /// First interval of the run, or of an episode following a truncation.
    Start,
    /// The previous episode reached the goal.
    Goal,
    /// The pair just played failed the known test.
    Unknown,
}

/// One environment step as seen by the learner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub state: usize,
    pub action: usize,
    /// `None` is the goal.
    pub next: Option<usize>,
    /// Sampled loss before any perturbation.
    pub loss: f64,
    /// Loss handed to the regression (after the floor, if any).
    pub observed_loss: f64,
    /// Outcome of the known test for `(state, action)`.
    pub known: bool,
}

/// Summary of one interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalRecord {
    /// Global interval index `m`, starting at 1.
    pub index: u64,
    pub trigger: Trigger,
    /// Pair whose known test fired, for `Trigger::Unknown`.
    pub trigger_pair: Option<(usize, usize)>,
    pub steps: u64,
    /// Realized (unperturbed) loss accumulated in the interval.
    pub loss: f64,
    pub evi_residual: f64,
    pub evi_converged: bool,
    /// Optimistic value of the episode's initial state.
    pub v_tilde_init: f64,
    pub b_star_cur: f64,
    /// Fraction of pairs passing the known test under the interval's context.
    pub known_fraction: f64,
    /// Number of B* doublings (each with a statistics reset) performed
    /// while starting this interval.
    pub doublings: u32,
}

/// Everything that happened in one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    /// 1-based episode number.
    pub episode: usize,
    pub context: Context,
    pub initial_state: usize,
    pub steps: u64,
    /// Realized (unperturbed) total loss.
    pub total_loss: f64,
    pub intervals_started: u64,
    pub unknown_triggers: u64,
    pub truncated: bool,
    pub intervals: Vec<IntervalRecord>,
    pub trace: Vec<StepRecord>,
}

/// Run totals.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RunTotals {
    /// `T`, total number of steps.
    pub steps: u64,
    /// `M`, total number of intervals.
    pub intervals: u64,
    pub truncations: u64,
    pub doublings: u64,
}

/// Complete record of one learner run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub episodes: Vec<EpisodeLog>,
    pub config: LearnerConfig,
    pub model_fingerprint: String,
    pub shape: ConfidenceShape,
    /// Whether the learner planned with the true contexts.
    pub mode: ContextMode,
    /// Loss floor applied to observations, if the perturbed mode was active.
    pub epsilon: Option<f64>,
    /// `ℓ_min` used by the known test.
    pub l_min_effective: f64,
    pub totals: RunTotals,
}

/// One line of the interval event stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntervalEvent {
    pub episode: usize,
    pub interval: u64,
    pub trigger: Trigger,
    pub steps: u64,
    pub interval_loss: f64,
    pub evi_residual: f64,
    pub v_tilde_init: f64,
    pub b_star_cur: f64,
    pub known_fraction: f64,
}

impl RunLog {
    /// Interval events in order, one per interval.
    pub fn events(&self) -> impl Iterator<Item = IntervalEvent> + '_ {
        self.episodes.iter().flat_map(|ep| {
            ep.intervals.iter().map(move |iv| IntervalEvent {
                episode: ep.episode,
                interval: iv.index,
                trigger: iv.trigger,
                steps: iv.steps,
                interval_loss: iv.loss,
                evi_residual: iv.evi_residual,
                v_tilde_init: iv.v_tilde_init,
                b_star_cur: iv.b_star_cur,
                known_fraction: iv.known_fraction,
            })
        })
    }

    /// The events as JSON lines, LF-terminated.
    pub fn events_jsonl(&self) -> String {
        let mut out = String::new();
        for ev in self.events() {
            out.push_str(&serde_json::to_string(&ev).expect("event serializes"));
            out.push('\n');
        }
        out
    }
}
