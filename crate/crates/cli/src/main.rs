//! Command-line front end: train steady/unsteady ROMs, evaluate trained
//! bundles out of sample, and aggregate traces into cost reports.
//!
//! Exit codes: 0 success, 2 usage/config error, 3 numerical failure,
//! 4 I/O or format error.

mod commands;

use clap::{Parser, Subcommand};
use morforge_core::CoreError;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "morforge",
    about = "Greedy training of projection-based reduced-order models on built-in desk-scale PDE models"
)]
struct Cli {
    /// Cap the number of worker threads (0 = library default).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a steady ROM with the standard, incremental, or multi-fidelity
    /// greedy strategy; writes a ROM bundle, a trace CSV and a metrics CSV.
    TrainSteady {
        /// key=value configuration file.
        config: PathBuf,
        /// Training strategy (defaults to the config's `variant`).
        #[arg(long, value_parser = ["vanilla", "incr", "incr-mf"])]
        variant: Option<String>,
    },
    /// Train unsteady ROMs over a sweep of EQ tolerances; writes per-delta
    /// traces with warm/cold NNLS comparison columns, bundles and metrics.
    TrainUnsteady {
        config: PathBuf,
        /// Comma-separated EQ tolerance sweep (defaults to the config's
        /// `delta_sweep`).
        #[arg(long)]
        delta: Option<String>,
    },
    /// Evaluate a trained ROM bundle against fresh high-fidelity solves.
    Eval {
        /// ROM bundle written by a train command.
        bundle: PathBuf,
        /// The configuration the bundle was trained with.
        #[arg(long)]
        config: PathBuf,
        /// Parameter source: `grid:NxM`, `file:PATH`, or `random:N:SEED`.
        #[arg(long)]
        params: String,
        /// Output CSV path (defaults to `eval.csv` next to the bundle).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Aggregate trace CSVs in a directory into a cost-breakdown table and
    /// plot-ready per-iteration series.
    Report {
        /// Directory containing trace_*.csv (and metrics_*.csv) files.
        trace_dir: PathBuf,
        /// Output directory (defaults to the trace directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn exit_code_for(err: &CoreError) -> u8 {
    match err {
        CoreError::InvalidArgument(_) | CoreError::DimensionMismatch(_) | CoreError::Config(_) => 2,
        CoreError::SolverFailure { .. } | CoreError::NnlsOverrun(_) => 3,
        CoreError::Io { .. } | CoreError::Format(_) => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.threads > 0 {
        // Build the global pool once; later calls would fail harmlessly.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global();
    }
    let result = match cli.command {
        Command::TrainSteady { config, variant } => {
            commands::train_steady(&config, variant.as_deref())
        }
        Command::TrainUnsteady { config, delta } => {
            commands::train_unsteady(&config, delta.as_deref())
        }
        Command::Eval {
            bundle,
            config,
            params,
            out,
        } => commands::eval(&bundle, &config, &params, out.as_deref()),
        Command::Report { trace_dir, out } => commands::report(&trace_dir, out.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
