//! `storage-bounds`: validate systems, compute bound series, train and export
//! storage policies, and run the day-ahead / real-time experiment.
//!
//! Exit codes: 0 success, 2 invalid input or failed validation, 3 I/O
//! error, 4 infeasible or unreliable dispatch, 5 fewer than 90% of the
//! simulation cells completed.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "storage-bounds", version, about = "Marginal-value bounds for storage dispatch")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check every structural invariant of a system document.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Opportunity-cost bound series from the chance-constrained dispatch.
    Bounds(BoundsArgs),
    /// Day-ahead / real-time experiment with result and summary tables.
    Simulate(SimulateArgs),
    /// Trained value function and stage thresholds for one storage.
    Policy(PolicyArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Mode {
    Da,
    Rolling,
    Hindsight,
}

#[derive(Args, Debug)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to `$OUT_ROOT/<command>` or `out/<command>`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Chance-constraint level; the document's value when absent.
    #[arg(long)]
    epsilon: Option<f64>,
}

#[derive(Args, Debug)]
struct BoundsArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum, default_value = "da")]
    mode: Mode,
    /// Forecast lead at which rolling updates regain the full σ.
    #[arg(long, default_value_t = 6)]
    lookahead: usize,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 10)]
    da: usize,
    #[arg(long, default_value_t = 100)]
    rt: usize,
    /// Worker threads; 0 uses every core.
    #[arg(long, env = "WORKERS", default_value_t = 0)]
    workers: usize,
    /// Comma-separated multipliers on the baseline price interval.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    sigma_scale: Vec<f64>,
    /// Comma-separated subset of original, adjusted, capped, both.
    #[arg(long, value_delimiter = ',', default_value = "original,adjusted,capped")]
    toggles: Vec<String>,
    /// Comma-separated discharge offer multipliers.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    withholding: Vec<f64>,
}

#[derive(Args, Debug)]
struct PolicyArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 0)]
    storage: usize,
    #[arg(long, default_value_t = 1.0)]
    sigma_scale: f64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Validate { config } => commands::validate(&config),
        Command::Bounds(a) => commands::bounds(&a),
        Command::Simulate(a) => commands::simulate(&a),
        Command::Policy(a) => commands::policy(&a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
