//! Command-line entry point for slimmable-network width and weight
//! optimization: `train`, `eval`, and `plot`.
//!
//! Exit codes: 0 success, 2 invalid config or unparseable input, 3 runtime
//! failure, 4 incompatible checkpoint. Set `SLIMOPT_LOG=quiet|info|debug`
//! to control stderr verbosity (default info).

use std::fmt;
use std::path::PathBuf;
use std::sync::OnceLock;

use clap::{Parser, Subcommand};

mod commands;
mod config;
mod svg;

#[derive(Debug)]
pub enum CliError {
    /// Invalid configuration or unparseable input file (exit 2).
    Config(String),
    /// Runtime failure during training or evaluation (exit 3).
    Runtime(String),
    /// Checkpoint does not match the requested spec (exit 4).
    Incompatible(String),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
            CliError::Incompatible(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "invalid config: {msg}"),
            CliError::Runtime(msg) => write!(f, "runtime failure: {msg}"),
            CliError::Incompatible(msg) => write!(f, "incompatible checkpoint: {msg}"),
        }
    }
}

fn verbosity() -> u8 {
    static LEVEL: OnceLock<u8> = OnceLock::new();
    *LEVEL.get_or_init(|| match std::env::var("SLIMOPT_LOG").as_deref() {
        Ok("quiet") | Ok("0") => 0,
        Ok("debug") | Ok("2") => 2,
        _ => 1,
    })
}

pub fn log_info(msg: &str) {
    if verbosity() >= 1 {
        eprintln!("slimopt: {msg}");
    }
}

pub fn log_debug(msg: &str) {
    if verbosity() >= 2 {
        eprintln!("slimopt: {msg}");
    }
}

#[derive(Parser)]
#[command(
    name = "slimopt",
    about = "Joint width and weight optimization for slimmable neural networks",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a training configuration and write its artifacts.
    Train {
        /// Path to a run-config JSON file.
        config: PathBuf,
    },
    /// Evaluate a checkpoint's trade-off curve on the held-out split.
    Eval {
        /// Checkpoint written by `train`.
        checkpoint: PathBuf,
        /// The run-config JSON the checkpoint was trained with.
        config: PathBuf,
        /// Cost-grid resolution for the AUC.
        #[arg(long, default_value_t = 64)]
        grid: usize,
    },
    /// Render one or more curve CSVs as an SVG overlay.
    Plot {
        /// Curve CSV files (one polyline each).
        #[arg(required = true)]
        curves: Vec<PathBuf>,
        /// Output SVG path.
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train { config } => commands::cmd_train(config),
        Command::Eval {
            checkpoint,
            config,
            grid,
        } => commands::cmd_eval(checkpoint, config, *grid),
        Command::Plot { curves, out } => commands::cmd_plot(curves, out),
    };
    if let Err(error) = result {
        eprintln!("slimopt: {error}");
        std::process::exit(error.exit_code());
    }
}
