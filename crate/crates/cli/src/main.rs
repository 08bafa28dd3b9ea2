//! `geodesic-nets`: train networks, walk them to sparse hyperplanes or to
//! each other, and export plot-ready tables.
//!
//! Exit codes:
//!
//! | code | meaning                                           |
//! |------|---------------------------------------------------|
//! | 0    | success (walks converged)                         |
//! | 2    | bad configuration, arguments or missing input     |
//! | 3    | a walk did not reach its goal (outputs written)   |
//! | 4    | numerical failure (divergence, solver failure)    |
//! | 5    | I/O or file-format error                          |

mod commands;
mod overrides;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use geodesic_nets::io::TaskKind;
use geodesic_nets::Error;

pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_NOT_CONVERGED: u8 = 3;
pub const EXIT_NUMERIC: u8 = 4;
pub const EXIT_IO: u8 = 5;

#[derive(Parser)]
#[command(
    name = "geodesic-nets",
    version,
    about = "Geodesic walks in neural-network weight space"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a network with SGD.
    Train(Common),
    /// Walk a trained network onto a sparsity plane.
    Sparsify {
        #[command(flatten)]
        common: Common,
        /// Also run the prune and fine-tune baseline.
        #[arg(long)]
        baseline: bool,
    },
    /// Walk from one task's network to another's and pick the best merged checkpoint.
    Merge(Common),
    /// Re-evaluate a stored path on a dataset's test split.
    Evaluate(Common),
    /// Export the metrics recorded in a stored path as CSV.
    EmitPlotData(Common),
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; flags override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Global seed; required unless the configuration has one.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    checkpoint2: Option<PathBuf>,
    #[arg(long)]
    path_file: Option<PathBuf>,
    /// Override any configuration key, e.g. `--set walk.beta=100` or
    /// `--set sparsify.level=0.7`. Values are parsed as TOML.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

pub enum Outcome {
    Done,
    NotConverged,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_)
        | Error::MissingFile(_)
        | Error::InvalidArgument(_)
        | Error::DimensionMismatch { .. }
        | Error::DegeneratePlane { .. }
        | Error::SizeCap { .. } => EXIT_CONFIG,
        Error::NoConvergedPath { .. } => EXIT_NOT_CONVERGED,
        Error::NumericOverflow { .. }
        | Error::NonFinite(_)
        | Error::TrainingDiverged { .. }
        | Error::SolverFailure { .. }
        | Error::WalkStep { .. }
        | Error::Cycle { .. }
        | Error::IntegrationDiverged { .. } => EXIT_NUMERIC,
        _ => EXIT_IO,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let start = Instant::now();
    let (name, task, common, baseline) = match cli.command {
        Command::Train(c) => ("train", TaskKind::Train, c, false),
        Command::Sparsify { common, baseline } => {
            ("sparsify", TaskKind::Sparsify, common, baseline)
        }
        Command::Merge(c) => ("merge", TaskKind::Merge, c, false),
        Command::Evaluate(c) => ("evaluate", TaskKind::Evaluate, c, false),
        Command::EmitPlotData(c) => ("emit-plot-data", TaskKind::Evaluate, c, false),
    };
    let result = overrides::resolve(task, &common).and_then(|config| match name {
        "train" => commands::train(&config),
        "sparsify" => commands::sparsify(config, baseline),
        "merge" => commands::merge(&config),
        "evaluate" => commands::evaluate(&config),
        _ => commands::emit_plot_data(&config),
    });
    let elapsed = start.elapsed().as_secs_f64();
    match result {
        Ok(Outcome::Done) => {
            eprintln!("{name}: done in {elapsed:.2}s");
            ExitCode::SUCCESS
        }
        Ok(Outcome::NotConverged) => {
            eprintln!("{name}: walk did not reach its goal ({elapsed:.2}s); outputs written");
            ExitCode::from(EXIT_NOT_CONVERGED)
        }
        Err(e) => {
            eprintln!("{name}: error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
