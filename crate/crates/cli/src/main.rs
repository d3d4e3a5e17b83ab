//! `ipr`: dataset generation, training, evaluation and curve export.

use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod error;
mod io;

use commands::{eval, export_curves, gen_data, train, validate};

#[derive(Debug, Parser)]
#[command(name = "ipr", version, about = "Iterative prototype refinement experiments")]
struct Cli {
    /// Only log warnings and errors.
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset with simulated annotators.
    GenData(gen_data::GenDataArgs),
    /// Train one mode over one or more seeds.
    Train(train::TrainArgs),
    /// Score saved checkpoints on a dataset split.
    Eval(eval::EvalArgs),
    /// Merge per-seed curves of a run into one long-format CSV.
    ExportCurves(export_curves::ExportCurvesArgs),
    /// Check a dataset file against the schema and split invariants.
    Validate(validate::ValidateArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .target(env_logger::Target::Stderr)
        .init();

    let result = match &cli.command {
        Command::GenData(a) => gen_data::run(a),
        Command::Train(a) => train::run(a),
        Command::Eval(a) => eval::run(a),
        Command::ExportCurves(a) => export_curves::run(a),
        Command::Validate(a) => validate::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
