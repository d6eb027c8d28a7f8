//! Empirical regret curves and their CSV form.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::oracle::OracleReport;
use crate::error::{Error, Result};
use crate::learner::RunLog;

/// Header of the regret CSV.
pub const REGRET_CSV_HEADER: &str =
    "episode,steps,realized_loss,optimal_value,regret,cum_regret,intervals,unknown_triggers,truncated,b_star_cur";

/// One episode of a regret curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretRow {
    pub episode: usize,
    pub steps: u64,
    pub realized_loss: f64,
    pub optimal_value: f64,
    /// `realized − optimal`; `+∞` marks a truncated episode.
    pub regret: f64,
    /// Prefix sum of the finite regrets; `+∞` while no episode has finished.
    pub cum_regret: f64,
    pub intervals: u64,
    pub unknown_triggers: u64,
    pub truncated: bool,
    pub b_star_cur: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretCurve {
    pub rows: Vec<RegretRow>,
    pub truncations: u64,
}

/// Per-episode regret against the oracle's optimal values.
///
/// The learner term is the realized (sampled, unperturbed) loss and the
/// oracle term the expected optimal value from the episode's initial state.
pub fn compute_regret(log: &RunLog, oracle: &OracleReport) -> Result<RegretCurve> {
    if log.episodes.len() != oracle.per_episode.len() {
        return Err(Error::Dimension(format!(
            "run has {} episodes, oracle has {}",
            log.episodes.len(),
            oracle.per_episode.len()
        )));
    }
    let mut rows = Vec::with_capacity(log.episodes.len());
    let mut cum = 0.0;
    let mut finished = 0usize;
    let mut truncations = 0;
    for (ep, opt) in log.episodes.iter().zip(&oracle.per_episode) {
        let regret = if ep.truncated {
            truncations += 1;
            f64::INFINITY
        } else {
            finished += 1;
            let r = ep.total_loss - opt.v_star_init;
            cum += r;
            r
        };
        rows.push(RegretRow {
            episode: ep.episode,
            steps: ep.steps,
            realized_loss: ep.total_loss,
            optimal_value: opt.v_star_init,
            regret,
            cum_regret: if finished == 0 { f64::INFINITY } else { cum },
            intervals: ep.intervals_started,
            unknown_triggers: ep.unknown_triggers,
            truncated: ep.truncated,
            b_star_cur: ep.intervals.last().map(|iv| iv.b_star_cur).unwrap_or(log.config.b_star_init),
        });
    }
    Ok(RegretCurve { rows, truncations })
}

/// Nine significant digits in scientific notation.
pub fn format_float(x: f64) -> String {
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    format!("{x:.8e}")
}

impl RegretCurve {
    /// Final cumulative regret (`+∞` if every episode was truncated).
    pub fn final_cum_regret(&self) -> f64 {
        self.rows.last().map(|r| r.cum_regret).unwrap_or(0.0)
    }

    /// Regrets of the finished episodes, in order.
    pub fn finite_regrets(&self) -> Vec<f64> {
        self.rows.iter().filter(|r| !r.truncated).map(|r| r.regret).collect()
    }

    /// Mean regret over the last tenth of the episodes divided by the mean
    /// over the first tenth (truncated episodes excluded).
    pub fn late_early_ratio(&self) -> f64 {
        let (early, late) = self.early_late_means(0.1);
        late / early
    }

    /// Mean regret over the first and the last `fraction` of the episodes.
    pub fn early_late_means(&self, fraction: f64) -> (f64, f64) {
        let n = self.rows.len();
        let w = ((n as f64 * fraction).round() as usize).clamp(1, n.max(1));
        let mean = |rows: &[RegretRow]| {
            let finite: Vec<f64> = rows.iter().filter(|r| !r.truncated).map(|r| r.regret).collect();
            finite.iter().sum::<f64>() / finite.len() as f64
        };
        (mean(&self.rows[..w]), mean(&self.rows[n - w..]))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.rows.len() + 1));
        out.push_str(REGRET_CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                r.episode,
                r.steps,
                format_float(r.realized_loss),
                format_float(r.optimal_value),
                format_float(r.regret),
                format_float(r.cum_regret),
                r.intervals,
                r.unknown_triggers,
                u8::from(r.truncated),
                format_float(r.b_star_cur),
            );
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let bad = |line: usize, what: &str| Error::Config(format!("regret csv line {line}: {what}"));
        let mut lines = text.lines();
        if lines.next() != Some(REGRET_CSV_HEADER) {
            return Err(bad(1, "unexpected header"));
        }
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 10 {
                return Err(bad(i + 2, "expected 10 fields"));
            }
            let int = |s: &str| s.parse::<u64>().map_err(|_| bad(i + 2, "bad integer"));
            let float = |s: &str| s.parse::<f64>().map_err(|_| bad(i + 2, "bad number"));
            rows.push(RegretRow {
                episode: int(f[0])? as usize,
                steps: int(f[1])?,
                realized_loss: float(f[2])?,
                optimal_value: float(f[3])?,
                regret: float(f[4])?,
                cum_regret: float(f[5])?,
                intervals: int(f[6])?,
                unknown_triggers: int(f[7])?,
                truncated: match f[8] {
                    "0" => false,
                    "1" => true,
                    _ => return Err(bad(i + 2, "bad truncation flag")),
                },
                b_star_cur: float(f[9])?,
            });
        }
        let truncations = rows.iter().filter(|r| r.truncated).count() as u64;
        Ok(Self { rows, truncations })
    }
}
