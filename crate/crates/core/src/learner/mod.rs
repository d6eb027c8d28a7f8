//! The optimistic learner for linear contextual SSPs.

mod agent;
mod config;
mod evi;
mod log;

pub use agent::{
    run, run_episode, run_with, AdaptiveContexts, ContextList, ContextMode, ContextProvider, EpisodeInputs,
    IntervalStart, IntervalView, LearnerState,
};
pub use config::{auto_epsilon, LearnerConfig};
pub use evi::{evi_plan, min_over_l1_ball, optimistic_loss, transition_radius, EviPlan};
pub use log::{EpisodeLog, IntervalEvent, IntervalRecord, RunLog, RunTotals, StepRecord, Trigger};
