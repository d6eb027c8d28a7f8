//! Regret minimization for linear contextual stochastic shortest path
//! problems.
//!
//! Each episode presents a context on the probability simplex; the episode's
//! SSP is a linear mixture of `d` unknown component SSPs. The learner fits
//! per-pair ridge regressions, builds confidence sets, plans optimistically
//! by extended value iteration and splits episodes into intervals whenever
//! it reaches the goal or plays a pair that is not yet well estimated.
//!
//! * [`ssp`]: tabular SSP operators, value iteration and policy evaluation.
//! * [`model`]: the linear ground truth, environment stepping, generators.
//! * [`estimation`]: sufficient statistics, ridge fits, radii, projection.
//! * [`learner`]: optimistic planning and the episodic learner.
//! * [`harness`]: oracle values, regret curves, diagnostics, experiments.

pub mod error;
pub mod estimation;
pub mod harness;
pub mod learner;
pub mod model;
pub mod ssp;

pub use error::{Error, Result};
