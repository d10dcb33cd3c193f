use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use slchs_cli::{resolve, run, CliError, EngineName, ExperimentConfig, Overrides, Subcommand};

/// Seeded experiments for OU-driven quadratic ODEs: Carleman linearization,
/// LCHS and Monte-Carlo Dyson propagators.
///
/// `--threads 1` guarantees bit-reproducible output; results are collected
/// in path order, so other thread counts give the same files as well.
#[derive(Debug, Parser)]
#[command(name = "slchs", version)]
struct Args {
    #[arg(value_enum)]
    subcommand: Subcommand,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, value_enum)]
    engine: Option<EngineName>,
}

fn main_inner(args: &Args) -> Result<PathBuf, CliError> {
    let cfg = ExperimentConfig::load(&args.config)?;
    let o = Overrides { seed: args.seed, out: args.out.clone(), threads: args.threads, engine: args.engine };
    let cfg = resolve(cfg, &o)?;
    run(args.subcommand, &cfg)
}

fn main() -> ExitCode {
    let args = Args::parse();
    match main_inner(&args) {
        Ok(dir) => {
            println!("{}", serde_json::json!({ "subcommand": args.subcommand.name(), "out": dir }));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
