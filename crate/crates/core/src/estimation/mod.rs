//! Per-pair ridge regression, confidence radii, the weighted projection onto
//! sub-stochastic matrices and the known-pair test.

mod estimates;
mod projection;
mod radius;
mod stats;

pub use estimates::{Estimates, EstimatesSnapshot, PairEstimate, PairSnapshot, SNAPSHOT_VERSION};
pub use projection::{
    is_substochastic, power_iteration, project_capped_simplex, project_columns, project_to_stochastic,
    project_to_stochastic_with, weighted_sq_norm, ProjectionOptions,
};
pub use radius::{dynamics_radius, is_known, known_threshold, loss_radius, ConfidenceShape};
pub use stats::{SaStatistics, REINVERT_EVERY};
