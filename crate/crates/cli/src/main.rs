//! `envdesign` command-line entry point.
//!
//! Exit codes: 0 success, 1 verification failure, 2 configuration error,
//! 3 runtime abort.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use envdesign_core::harness::{run_experiment, ExperimentConfig, ExperimentKind, StageError};
use envdesign_core::Error;

#[derive(Parser, Debug)]
#[command(name = "envdesign", version, about = "Adversarial environment design experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check the MDP/policy duality on a suite of random instances.
    VerifyDuality(RunArgs),
    /// Train soft-wall blockage against an agent.
    TrainSoft(RunArgs),
    /// Train the maze generator against an agent.
    TrainHard(RunArgs),
    /// Measure an agent's path length on a map.
    Evaluate(RunArgs),
    /// Exhaustively find the map maximizing a deterministic agent's path.
    Oracle(RunArgs),
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed (overrides the config file).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for artifacts.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// `key=value` override, applied after the config file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

const EXIT_VERIFICATION: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

fn build_config(kind: ExperimentKind, args: &RunArgs) -> Result<ExperimentConfig, Error> {
    let mut config = ExperimentConfig::new(kind, &args.out);
    if let Some(path) = &args.config {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        config.apply_text(&text)?;
    }
    for assignment in &args.overrides {
        config.apply_override(assignment)?;
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn exit_code_for(err: &StageError) -> u8 {
    match (&err.source, err.stage) {
        (_, "config") | (Error::Config(_), _) => EXIT_CONFIG,
        _ => EXIT_RUNTIME,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = match &cli.command {
        Command::VerifyDuality(a) => (ExperimentKind::VerifyDuality, a),
        Command::TrainSoft(a) => (ExperimentKind::TrainSoft, a),
        Command::TrainHard(a) => (ExperimentKind::TrainHard, a),
        Command::Evaluate(a) => (ExperimentKind::Evaluate, a),
        Command::Oracle(a) => (ExperimentKind::BruteForceOracle, a),
    };
    let config = match build_config(kind, args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    match run_experiment(&config) {
        Ok(outcome) => {
            for (k, v) in &outcome.summary {
                println!("{k} = {v}");
            }
            println!("artifacts in {}", outcome.output_dir.display());
            if outcome.verification_passed {
                ExitCode::SUCCESS
            } else {
                eprintln!("verification failed");
                ExitCode::from(EXIT_VERIFICATION)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
