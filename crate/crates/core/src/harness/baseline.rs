use rand::Rng;

use crate::error::Result;
use crate::learner::{run_with, ContextList, ContextMode, LearnerConfig, RunLog};
use crate::model::{Context, LinearCsspModel};

/// The learner planning with the barycenter `(1/d, …, 1/d)` in every
/// episode while the environment follows `contexts`.
pub fn baseline_context_blind<R: Rng + ?Sized>(
    cfg: &LearnerConfig,
    model: &LinearCsspModel,
    contexts: &[Context],
    rng: &mut R,
) -> Result<RunLog> {
    run_with(cfg, model, &mut ContextList::new(contexts.to_vec()), rng, ContextMode::Blind, &mut |_| {})
}
