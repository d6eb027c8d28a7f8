//! Experiment orchestration: oracle values, regret curves, diagnostics,
//! baselines and multi-seed experiments.

mod baseline;
mod experiment;
mod hpe;
mod oracle;
mod regret;

pub use baseline::baseline_context_blind;
pub use experiment::{
    report, run_experiment, run_seed, seed_streams, summarize_dir, write_plot_data, Baselines, ContextKindName, ContextSpec,
    ExperimentConfig, RunOutcome, RunSummary, SeedOracle, Summary, VariantSummary, BLIND_VARIANT, LEARNER_VARIANT,
};
pub use hpe::{hpe_diagnostics, interval_loss_bound, replay_known_tests, HpeReport};
pub use oracle::{context_optimum, oracle_values, ContextOptimum, OracleReport, ORACLE_TOL};
pub use regret::{compute_regret, format_float, RegretCurve, RegretRow, REGRET_CSV_HEADER};
