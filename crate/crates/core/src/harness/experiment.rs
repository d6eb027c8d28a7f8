//! Multi-seed experiments driven by a TOML configuration, and the artifacts
//! they leave on disk.
//!
//! Layout of an output directory:
//!
//! ```text
//! config.toml                 canonical form of the configuration
//! model.json                  the instance
//! model.sha256                its fingerprint
//! oracle.json                 per-seed B*_emp and T*_emp
//! <variant>/seed_<s>/regret.csv
//! <variant>/seed_<s>/events.jsonl
//! <variant>/seed_<s>/diagnostics.json
//! plot_<variant>.csv          cumulative regret across seeds, per episode
//! summary.json
//! ```
//!
//! The summary is a function of the files above only, so `report` can
//! rebuild it byte for byte.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::hpe::{hpe_diagnostics, interval_loss_bound, HpeReport};
use super::oracle::oracle_values;
use super::regret::{compute_regret, format_float, RegretCurve};
use crate::error::{Error, Result};
use crate::learner::{run_with, ContextList, ContextMode, IntervalEvent, LearnerConfig};
use crate::model::{context_sequence, generate_instance, validate_model, ContextKind, GeneratorSpec, LinearCsspModel};

/// Name of the context-aware learner in artifacts.
pub const LEARNER_VARIANT: &str = "lr_cssp";
/// Name of the context-blind baseline in artifacts.
pub const BLIND_VARIANT: &str = "context_blind";

/// Context-sequence part of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContextSpec {
    /// `uniform`, `cyclic_vertices` or `fixed`.
    pub kind: ContextKindName,
    /// Number of episodes `K`.
    pub episodes: usize,
    /// The context of every episode, for `kind = "fixed"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextKindName {
    Uniform,
    CyclicVertices,
    Fixed,
}

impl ContextSpec {
    pub fn kind(&self) -> Result<ContextKind> {
        match (self.kind, &self.context) {
            (ContextKindName::Uniform, None) => Ok(ContextKind::Uniform),
            (ContextKindName::CyclicVertices, None) => Ok(ContextKind::CyclicVertices),
            (ContextKindName::Fixed, Some(c)) => Ok(ContextKind::Fixed { context: c.clone() }),
            (ContextKindName::Fixed, None) => Err(Error::Config("contexts.context is required for kind = \"fixed\"".into())),
            (_, Some(_)) => Err(Error::Config("contexts.context is only allowed for kind = \"fixed\"".into())),
        }
    }
}

/// Which baselines run next to the learner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Baselines {
    #[serde(default)]
    pub context_blind: bool,
}

/// A complete experiment.
///
/// Keys, in canonical order: `seeds`, `output_dir`, `oracle_informed`
/// (default `false`), `model_path` (optional; replaces the generator's
/// output), `[generator]`, `[contexts]`, `[learner]` (every field has a
/// default), `[baselines]` (default: none).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seeds: Vec<u64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Sets `b_star_init` to `max(1, B*_emp)` and, when the model has
    /// strictly positive losses, `l_min` to the true minimum loss.
    #[serde(default)]
    pub oracle_informed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_path: Option<PathBuf>,
    pub generator: GeneratorSpec,
    pub contexts: ContextSpec,
    #[serde(default)]
    pub learner: LearnerConfig,
    #[serde(default)]
    pub baselines: Baselines,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// The canonical serialization: keys in declaration order, defaults
    /// written out.
    pub fn to_canonical_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must not be empty".into()));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(Error::Config("seeds must be distinct".into()));
        }
        if self.contexts.episodes == 0 {
            return Err(Error::Config("contexts.episodes must be positive".into()));
        }
        self.contexts.kind()?;
        self.generator.validate()?;
        self.learner.validate()
    }

    /// The seed list shifted by `offset`.
    pub fn with_seed_offset(mut self, offset: u64) -> Result<Self> {
        for s in &mut self.seeds {
            *s = s
                .checked_add(offset)
                .ok_or_else(|| Error::Config(format!("seed {s} + offset {offset} overflows")))?;
        }
        Ok(self)
    }

    /// The generated instance, or the one stored at `model_path`.
    pub fn model(&self) -> Result<LinearCsspModel> {
        let model = match &self.model_path {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| Error::Config(format!("cannot read model {}: {e}", path.display())))?;
                serde_json::from_str(&text)
                    .map_err(|e| Error::Config(format!("cannot parse model {}: {e}", path.display())))?
            }
            None => generate_instance(&self.generator)?,
        };
        let violations = validate_model(&model);
        if !violations.is_empty() {
            return Err(Error::Config(format!("model has {} invariant violations", violations.len())));
        }
        Ok(model)
    }
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

const CONTEXT_STREAM: u64 = 0;
const ENVIRONMENT_STREAM: u64 = 1;

/// Independent random streams of one seed, for the context sequence and for
/// the environment. Every variant of a seed replays the same two streams.
pub fn seed_streams(seed: u64) -> (ChaCha8Rng, ChaCha8Rng) {
    (rng_for(seed, CONTEXT_STREAM), rng_for(seed, ENVIRONMENT_STREAM))
}

/// Oracle quantities of one seed's context sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedOracle {
    pub seed: u64,
    pub b_star_emp: f64,
    pub t_star_emp: f64,
}

/// In-memory outcome of one (variant, seed) run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub variant: String,
    pub seed: u64,
    pub curve: RegretCurve,
    pub events_jsonl: String,
    pub hpe: HpeReport,
    /// Loss floor of the perturbed mode, if active.
    pub epsilon: Option<f64>,
}

/// Runs every variant on one seed.
pub fn run_seed(cfg: &ExperimentConfig, model: &LinearCsspModel, seed: u64) -> Result<(SeedOracle, Vec<RunOutcome>)> {
    let kind = cfg.contexts.kind()?;
    let (mut context_rng, env_rng) = seed_streams(seed);
    let contexts = context_sequence(&kind, cfg.contexts.episodes, model.d, &mut context_rng)?;
    let oracle = oracle_values(model, &contexts)?;
    let mut learner = cfg.learner.clone();
    if cfg.oracle_informed {
        learner.b_star_init = oracle.b_star_emp.max(1.0);
        let floor = model.loss_embed.iter().copied().fold(f64::INFINITY, f64::min);
        if floor > 0.0 {
            learner.l_min = floor;
        }
    }
    let mut variants = vec![(LEARNER_VARIANT, ContextMode::Aware)];
    if cfg.baselines.context_blind {
        variants.push((BLIND_VARIANT, ContextMode::Blind));
    }
    let mut outcomes = Vec::with_capacity(variants.len());
    for (name, mode) in variants {
        let mut rng = env_rng.clone();
        let log = run_with(&learner, model, &mut ContextList::new(contexts.clone()), &mut rng, mode, &mut |_| {})?;
        outcomes.push(RunOutcome {
            variant: name.to_string(),
            seed,
            curve: compute_regret(&log, &oracle)?,
            events_jsonl: log.events_jsonl(),
            hpe: hpe_diagnostics(&log, &oracle, learner.delta)?,
            epsilon: log.epsilon,
        });
    }
    Ok((SeedOracle { seed, b_star_emp: oracle.b_star_emp, t_star_emp: oracle.t_star_emp }, outcomes))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::Io(format!("{}: {e}", parent.display())))?;
    }
    fs::write(path, contents).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))
}

fn run_dir(out: &Path, variant: &str, seed: u64) -> PathBuf {
    out.join(variant).join(format!("seed_{seed}"))
}

/// Runs the experiment over all seeds in parallel and writes its artifacts
/// to `out`. Results do not depend on the number of worker threads.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path) -> Result<Summary> {
    cfg.validate()?;
    let model = cfg.model()?;
    let results: Vec<(SeedOracle, Vec<RunOutcome>)> =
        cfg.seeds.par_iter().map(|&seed| run_seed(cfg, &model, seed)).collect::<Result<_>>()?;

    write(&out.join("config.toml"), cfg.to_canonical_toml())?;
    write(&out.join("model.json"), serde_json::to_string_pretty(&model).expect("model serializes"))?;
    write(&out.join("model.sha256"), format!("{}\n", model.fingerprint()))?;
    let oracles: Vec<&SeedOracle> = results.iter().map(|(o, _)| o).collect();
    write(&out.join("oracle.json"), serde_json::to_string_pretty(&oracles).expect("oracle serializes"))?;
    for (_, outcomes) in &results {
        for run in outcomes {
            let dir = run_dir(out, &run.variant, run.seed);
            write(&dir.join("regret.csv"), run.curve.to_csv())?;
            write(&dir.join("events.jsonl"), &run.events_jsonl)?;
            write(&dir.join("diagnostics.json"), serde_json::to_string_pretty(&run.hpe).expect("report serializes"))?;
        }
    }
    let summary = summarize_dir(out)?;
    write(&out.join("summary.json"), summary.to_json())?;
    write_plot_data(out, &summary)?;
    Ok(summary)
}

/// Statistics of one run, as recovered from its artifacts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub episodes: usize,
    /// `None` when no episode finished.
    pub final_cum_regret: Option<f64>,
    pub early_mean_regret: Option<f64>,
    pub late_mean_regret: Option<f64>,
    pub truncations: u64,
    pub intervals: u64,
    pub hpe_violation_fraction: f64,
    pub identities_hold: bool,
    pub b_star_emp: f64,
    pub t_star_emp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub variant: String,
    pub runs: Vec<RunSummary>,
    pub final_regret_mean: Option<f64>,
    pub final_regret_median: Option<f64>,
    pub final_regret_iqr: Option<f64>,
    /// Seed-averaged late mean regret over seed-averaged early mean regret
    /// (first and last tenth of the episodes).
    pub slope_ratio: Option<f64>,
    pub truncations: u64,
    pub hpe_violation_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub model_fingerprint: String,
    pub variants: Vec<VariantSummary>,
}

impl Summary {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("summary serializes");
        s.push('\n');
        s
    }

    /// One row per variant.
    pub fn table(&self) -> String {
        let opt = |x: Option<f64>| x.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into());
        let mut out = format!(
            "{:<16}{:>6}{:>14}{:>14}{:>12}{:>10}{:>8}{:>10}\n",
            "variant", "runs", "mean_regret", "median", "iqr", "slope", "trunc", "hpe_viol"
        );
        for v in &self.variants {
            let _ = writeln!(
                out,
                "{:<16}{:>6}{:>14}{:>14}{:>12}{:>10}{:>8}{:>10.4}",
                v.variant,
                v.runs.len(),
                opt(v.final_regret_mean),
                opt(v.final_regret_median),
                opt(v.final_regret_iqr),
                opt(v.slope_ratio),
                v.truncations,
                v.hpe_violation_fraction
            );
        }
        out
    }
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Rebuilds the summary from the artifacts in `out`.
pub fn summarize_dir(out: &Path) -> Result<Summary> {
    let cfg = ExperimentConfig::from_toml(&read(&out.join("config.toml"))?)?;
    let fingerprint = read(&out.join("model.sha256"))?.trim().to_string();
    let oracles: Vec<SeedOracle> = serde_json::from_str(&read(&out.join("oracle.json"))?)
        .map_err(|e| Error::Config(format!("oracle.json: {e}")))?;
    let mut names = vec![LEARNER_VARIANT];
    if cfg.baselines.context_blind {
        names.push(BLIND_VARIANT);
    }
    let mut variants = Vec::new();
    for name in names {
        let mut runs = Vec::new();
        for oracle in &oracles {
            let dir = run_dir(out, name, oracle.seed);
            let curve = RegretCurve::from_csv(&read(&dir.join("regret.csv"))?)?;
            let events = read(&dir.join("events.jsonl"))?
                .lines()
                .map(|l| serde_json::from_str::<IntervalEvent>(l).map_err(|e| Error::Config(format!("events.jsonl: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            let diagnostics: HpeReport = serde_json::from_str(&read(&dir.join("diagnostics.json"))?)
                .map_err(|e| Error::Config(format!("diagnostics.json: {e}")))?;
            let violations = events
                .iter()
                .filter(|ev| ev.interval_loss > interval_loss_bound(oracle.b_star_emp, ev.interval, cfg.learner.delta))
                .count();
            let (early, late) = curve.early_late_means(0.1);
            runs.push(RunSummary {
                seed: oracle.seed,
                episodes: curve.rows.len(),
                final_cum_regret: finite(curve.final_cum_regret()),
                early_mean_regret: finite(early),
                late_mean_regret: finite(late),
                truncations: curve.truncations,
                intervals: events.len() as u64,
                hpe_violation_fraction: if events.is_empty() { 0.0 } else { violations as f64 / events.len() as f64 },
                identities_hold: diagnostics.identities_hold(),
                b_star_emp: oracle.b_star_emp,
                t_star_emp: oracle.t_star_emp,
            });
        }
        let mut finals: Vec<f64> = runs.iter().filter_map(|r| r.final_cum_regret).collect();
        finals.sort_by(f64::total_cmp);
        let early: Vec<f64> = runs.iter().filter_map(|r| r.early_mean_regret).collect();
        let late: Vec<f64> = runs.iter().filter_map(|r| r.late_mean_regret).collect();
        let total_intervals: u64 = runs.iter().map(|r| r.intervals).sum();
        let total_violations: f64 = runs.iter().map(|r| r.hpe_violation_fraction * r.intervals as f64).sum();
        variants.push(VariantSummary {
            variant: name.to_string(),
            final_regret_mean: mean(&finals),
            final_regret_median: (!finals.is_empty()).then(|| quantile(&finals, 0.5)),
            final_regret_iqr: (!finals.is_empty()).then(|| quantile(&finals, 0.75) - quantile(&finals, 0.25)),
            slope_ratio: match (mean(&early), mean(&late)) {
                (Some(e), Some(l)) => finite(l / e),
                _ => None,
            },
            truncations: runs.iter().map(|r| r.truncations).sum(),
            hpe_violation_fraction: if total_intervals == 0 { 0.0 } else { total_violations / total_intervals as f64 },
            runs,
        });
    }
    Ok(Summary { model_fingerprint: fingerprint, variants })
}

/// Writes `plot_<variant>.csv`: per episode, the mean, minimum and maximum
/// cumulative regret across seeds (finished episodes only).
pub fn write_plot_data(out: &Path, summary: &Summary) -> Result<()> {
    for v in &summary.variants {
        let curves = v
            .runs
            .iter()
            .map(|r| RegretCurve::from_csv(&read(&run_dir(out, &v.variant, r.seed).join("regret.csv"))?))
            .collect::<Result<Vec<_>>>()?;
        let episodes = curves.iter().map(|c| c.rows.len()).min().unwrap_or(0);
        let mut csv = String::from("episode,mean_cum_regret,min_cum_regret,max_cum_regret\n");
        for i in 0..episodes {
            let vals: Vec<f64> = curves.iter().map(|c| c.rows[i].cum_regret).filter(|x| x.is_finite()).collect();
            let (m, lo, hi) = match mean(&vals) {
                Some(m) => (
                    m,
                    vals.iter().copied().fold(f64::INFINITY, f64::min),
                    vals.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                ),
                None => (f64::INFINITY, f64::INFINITY, f64::INFINITY),
            };
            let _ = writeln!(csv, "{},{},{},{}", i + 1, format_float(m), format_float(lo), format_float(hi));
        }
        write(&out.join(format!("plot_{}.csv", v.variant)), csv)?;
    }
    Ok(())
}

/// Recomputes the summary of a finished run directory, checks it against
/// the stored one and refreshes the plot data.
pub fn report(out: &Path) -> Result<Summary> {
    if !out.join("summary.json").is_file() {
        return Err(Error::Config(format!("{} holds no finished experiment", out.display())));
    }
    let stored = read(&out.join("summary.json"))?;
    let summary = summarize_dir(out)?;
    if summary.to_json() != stored {
        return Err(Error::Config(format!("stored summary in {} does not match the raw artifacts", out.display())));
    }
    write_plot_data(out, &summary)?;
    Ok(summary)
}
