use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use lrcssp::harness::{report, run_experiment, ExperimentConfig};
use lrcssp::{Error, Result};

/// Regret experiments for linear contextual stochastic shortest paths.
#[derive(Debug, Parser)]
#[command(name = "lrcssp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the configured instance and write it with its fingerprint.
    Gen {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (defaults to the config's `output_dir`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the learner and the enabled baselines over the seed list.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads (defaults to the number of cores).
        #[arg(long)]
        jobs: Option<usize>,
        /// Added to every seed of the list.
        #[arg(long, default_value_t = 0)]
        seed_offset: u64,
    },
    /// Recompute the summary of a finished run directory and print it.
    Report {
        #[arg(long)]
        out: PathBuf,
    },
}

fn gen(config: &Path, out: Option<PathBuf>) -> Result<()> {
    let cfg = ExperimentConfig::load(config)?;
    let out = out.unwrap_or_else(|| cfg.output_dir.clone());
    let model = cfg.model()?;
    let io = |e: std::io::Error| Error::Io(format!("{}: {e}", out.display()));
    std::fs::create_dir_all(&out).map_err(io)?;
    std::fs::write(out.join("model.json"), serde_json::to_string_pretty(&model).expect("model serializes")).map_err(io)?;
    let fingerprint = model.fingerprint();
    std::fs::write(out.join("model.sha256"), format!("{fingerprint}\n")).map_err(io)?;
    println!("{fingerprint}");
    Ok(())
}

fn run(config: &Path, out: Option<PathBuf>, jobs: Option<usize>, seed_offset: u64) -> Result<()> {
    let cfg = ExperimentConfig::load(config)?.with_seed_offset(seed_offset)?;
    let out = out.unwrap_or_else(|| cfg.output_dir.clone());
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs {
        if n == 0 {
            return Err(Error::Config("--jobs must be positive".into()));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| Error::Io(e.to_string()))?;
    let summary = pool.install(|| run_experiment(&cfg, &out))?;
    print!("{}", summary.table());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen { config, out } => gen(&config, out),
        Command::Run { config, out, jobs, seed_offset } => run(&config, out, jobs, seed_offset),
        Command::Report { out } => report(&out).map(|s| print!("{}", s.table())),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_usage() { 2 } else { 1 })
        }
    }
}
