use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parameters of the learner.
///
/// Defaults: `delta = 0.1`, `lambda = 1`, `l_min = 0` (perturbed-loss mode),
/// `epsilon_perturb` automatic, `b_star_init = 1`, `evi_tol = 1e-6`,
/// `evi_max_iter = 100000`, `episode_step_cap = 1000000`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnerConfig {
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    /// Lower bound on the mean losses; `0` switches to perturbed losses.
    #[serde(default)]
    pub l_min: f64,
    /// Loss floor used when `l_min = 0`; `None` selects `|S| (d²|A|/K)^{1/3}`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon_perturb: Option<f64>,
    #[serde(default = "default_b_star")]
    pub b_star_init: f64,
    #[serde(default = "default_evi_tol")]
    pub evi_tol: f64,
    #[serde(default = "default_evi_max_iter")]
    pub evi_max_iter: usize,
    #[serde(default = "default_step_cap")]
    pub episode_step_cap: u64,
}

fn default_delta() -> f64 {
    0.1
}

fn default_lambda() -> f64 {
    1.0
}

fn default_b_star() -> f64 {
    1.0
}

fn default_evi_tol() -> f64 {
    1e-6
}

fn default_evi_max_iter() -> usize {
    100_000
}

fn default_step_cap() -> u64 {
    1_000_000
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            delta: default_delta(),
            lambda: default_lambda(),
            l_min: 0.0,
            epsilon_perturb: None,
            b_star_init: default_b_star(),
            evi_tol: default_evi_tol(),
            evi_max_iter: default_evi_max_iter(),
            episode_step_cap: default_step_cap(),
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad(format!("delta must lie in (0, 1), got {}", self.delta));
        }
        if self.lambda.is_nan() || self.lambda < 1.0 || !self.lambda.is_finite() {
            return bad(format!("lambda must be at least 1, got {}", self.lambda));
        }
        if !(self.l_min >= 0.0 && self.l_min <= 1.0) {
            return bad(format!("l_min must lie in [0, 1], got {}", self.l_min));
        }
        if let Some(eps) = self.epsilon_perturb {
            if eps.is_nan() || eps <= 0.0 || !eps.is_finite() {
                return bad(format!("epsilon_perturb must be positive, got {eps}"));
            }
        }
        if self.b_star_init.is_nan() || self.b_star_init < 1.0 || !self.b_star_init.is_finite() {
            return bad(format!("b_star_init must be at least 1, got {}", self.b_star_init));
        }
        if self.evi_tol.is_nan() || self.evi_tol <= 0.0 {
            return bad(format!("evi_tol must be positive, got {}", self.evi_tol));
        }
        if self.evi_max_iter == 0 || self.episode_step_cap == 0 {
            return bad("evi_max_iter and episode_step_cap must be positive".into());
        }
        Ok(())
    }
}

/// `|S| · (d²|A|/K)^{1/3}`, the automatic loss floor of the perturbed mode.
pub fn auto_epsilon(n_states: usize, d: usize, n_actions: usize, episodes: usize) -> f64 {
    n_states as f64 * ((d * d * n_actions) as f64 / episodes as f64).cbrt()
}
