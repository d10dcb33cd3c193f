//! Experiment driver for the `slchs` numerics: strict TOML configs, seeded
//! runs over rayon, and CSV plus `summary.json` output.
//!
//! Path loops collect per-path results in index order and reduce serially,
//! so outputs are bit-identical for any thread count; `--threads 1` is the
//! documented guarantee.

pub mod config;
pub mod experiments;
pub mod output;

use std::path::PathBuf;

pub use config::{EngineName, ExperimentConfig};
use output::RunContext;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Module(#[from] slchs::Error),
    #[error("io error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            _ => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Module(_) => "module",
            CliError::Io(_) => "io",
        }
    }

    /// Machine-readable form written to stderr on failure.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({ "error": self.kind(), "message": self.to_string(), "exit_code": self.exit_code() })
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Subcommand {
    OuStats,
    CarlemanConvergence,
    TailExperiment,
    LchsSolve,
    DysonBench,
    Resources,
}

impl Subcommand {
    pub fn name(self) -> &'static str {
        match self {
            Subcommand::OuStats => "ou-stats",
            Subcommand::CarlemanConvergence => "carleman-convergence",
            Subcommand::TailExperiment => "tail-experiment",
            Subcommand::LchsSolve => "lchs-solve",
            Subcommand::DysonBench => "dyson-bench",
            Subcommand::Resources => "resources",
        }
    }
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub engine: Option<EngineName>,
}

pub fn resolve(mut cfg: ExperimentConfig, o: &Overrides) -> Result<ExperimentConfig, CliError> {
    if let Some(s) = o.seed {
        cfg.seed = s;
    }
    if let Some(p) = &o.out {
        cfg.out = Some(p.to_string_lossy().into_owned());
    }
    if let Some(t) = o.threads {
        cfg.threads = Some(t);
    }
    if let Some(e) = o.engine {
        cfg.engine = Some(e);
    }
    if cfg.out.is_none() {
        return Err(CliError::Config("out: no output directory (set `out` or pass --out)".into()));
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Runs one subcommand on a resolved config inside a pool of `cfg.threads` workers.
pub fn run(sub: Subcommand, cfg: &ExperimentConfig) -> Result<PathBuf, CliError> {
    let threads = cfg.threads.unwrap_or(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Io(format!("thread pool: {e}")))?;
    let ctx = RunContext::new(sub.name(), cfg)?;
    pool.install(|| match sub {
        Subcommand::OuStats => experiments::ou_stats::write(&experiments::ou_stats::run(cfg)?, &ctx),
        Subcommand::CarlemanConvergence => experiments::carleman::write(&experiments::carleman::run(cfg)?, &ctx),
        Subcommand::TailExperiment => experiments::tail::write(&experiments::tail::run(cfg)?, &ctx),
        Subcommand::LchsSolve => experiments::lchs::write(&experiments::lchs::run(cfg)?, &ctx),
        Subcommand::DysonBench => experiments::dyson::write(&experiments::dyson::run(cfg)?, &ctx),
        Subcommand::Resources => experiments::resources::write(&experiments::resources::run(cfg)?, &ctx),
    })?;
    Ok(ctx.dir.clone())
}
