//! Confidence radii and the known-pair test.

use serde::{Deserialize, Serialize};

use super::stats::SaStatistics;
use crate::model::Context;

/// Sizes entering the union bounds of the confidence radii.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfidenceShape {
    pub d: usize,
    pub n_states: usize,
    pub n_actions: usize,
}

/// `√(d · ln(8|S||A|(1 + τ/λ)/δ)) + √λ`.
pub fn loss_radius(tau: u64, shape: &ConfidenceShape, lambda: f64, delta: f64) -> f64 {
    debug_assert!(delta > 0.0 && delta < 1.0 && lambda >= 1.0);
    let count = 8.0 * (shape.n_states * shape.n_actions) as f64 * (1.0 + tau as f64 / lambda);
    (shape.d as f64 * (count / delta).ln()).sqrt() + lambda.sqrt()
}

/// `|S| · (√(d · ln(8|S|²|A|(1 + τ/λ)/δ)) + √λ)`.
pub fn dynamics_radius(tau: u64, shape: &ConfidenceShape, lambda: f64, delta: f64) -> f64 {
    debug_assert!(delta > 0.0 && delta < 1.0 && lambda >= 1.0);
    let s = shape.n_states as f64;
    let count = 8.0 * s * s * shape.n_actions as f64 * (1.0 + tau as f64 / lambda);
    s * ((shape.d as f64 * (count / delta).ln()).sqrt() + lambda.sqrt())
}

/// Right-hand side of the known-pair inequality.
pub fn known_threshold(tau: u64, shape: &ConfidenceShape, lambda: f64, l_min: f64, b_star: f64, m: u64, delta: f64) -> f64 {
    debug_assert!(m >= 1 && b_star >= 1.0);
    let beta = dynamics_radius(tau, shape, lambda, delta);
    let interval_term = (4.0 * m as f64 / delta).ln().sqrt();
    l_min / (10.0 * b_star * beta.max(interval_term))
}

/// `‖c‖_{V̄⁻¹} < ℓ_min / (10 B* max{β_P(τ), √ln(4m/δ)})`.
pub fn is_known(
    stats: &SaStatistics,
    c: &Context,
    l_min: f64,
    b_star: f64,
    m: u64,
    delta: f64,
    shape: &ConfidenceShape,
) -> bool {
    stats.context_norm(c) < known_threshold(stats.tau(), shape, stats.lambda(), l_min, b_star, m, delta)
}
