use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{induce_ssp, Context, LinearCsspModel};
use crate::ssp::{expected_hitting_time, value_iteration, Policy, DEFAULT_MAX_ITER};

/// Residual tolerance of the oracle's value iteration.
pub const ORACLE_TOL: f64 = 1e-10;

/// Optimal quantities of one context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextOptimum {
    pub initial_state: usize,
    /// `V*_c(s_init)`.
    pub v_star_init: f64,
    pub v_star_max: f64,
    /// `max_s T^{π*_c}(s)`.
    pub hitting_time_max: f64,
    pub policy: Policy,
}

/// Oracle values along a context sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub per_episode: Vec<ContextOptimum>,
    /// Largest optimal value over the sequence and all states.
    pub b_star_emp: f64,
    /// Largest optimal hitting time over the sequence and all states.
    pub t_star_emp: f64,
}

impl OracleReport {
    pub fn v_star_init(&self, episode_index: usize) -> f64 {
        self.per_episode[episode_index].v_star_init
    }
}

/// Optimal value, policy and hitting time of the SSP induced by `c`.
pub fn context_optimum(model: &LinearCsspModel, c: &Context) -> Result<ContextOptimum> {
    let ssp = induce_ssp(model, c)?;
    let (v, policy) = value_iteration(&ssp, ORACLE_TOL, DEFAULT_MAX_ITER)
        .map_err(|e| Error::Config(format!("model rejected: oracle value iteration failed ({e})")))?;
    let hitting = expected_hitting_time(&ssp, &policy)
        .map_err(|e| Error::Config(format!("model rejected: optimal policy is improper ({e})")))?;
    let s_init = model.initial_state(c);
    Ok(ContextOptimum {
        initial_state: s_init,
        v_star_init: v[s_init],
        v_star_max: v.0.iter().copied().fold(0.0, f64::max),
        hitting_time_max: hitting.0.iter().copied().fold(0.0, f64::max),
        policy,
    })
}

/// Solves every context of the sequence (repeated contexts are solved once).
pub fn oracle_values(model: &LinearCsspModel, contexts: &[Context]) -> Result<OracleReport> {
    let mut cache: HashMap<Vec<u64>, ContextOptimum> = HashMap::new();
    let mut per_episode = Vec::with_capacity(contexts.len());
    for c in contexts {
        let key: Vec<u64> = c.as_slice().iter().map(|x| x.to_bits()).collect();
        let opt = match cache.get(&key) {
            Some(o) => o.clone(),
            None => {
                let o = context_optimum(model, c)?;
                cache.insert(key, o.clone());
                o
            }
        };
        per_episode.push(opt);
    }
    let b_star_emp = per_episode.iter().map(|o| o.v_star_max).fold(0.0, f64::max);
    let t_star_emp = per_episode.iter().map(|o| o.hitting_time_max).fold(0.0, f64::max);
    Ok(OracleReport { per_episode, b_star_emp, t_star_emp })
}
