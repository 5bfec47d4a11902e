//! Command-line experiment runner.
//!
//! `wskde <command> --config <file>` loads a TOML config, runs seeded
//! replications and writes CSV tables plus a `metadata.json` into the
//! output directory.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use thiserror::Error;

pub mod commands;
pub mod config;
pub mod experiment;
pub mod output;

pub use config::{load_config, ExperimentConfig, ExperimentKind, NoiseSpec, Overrides};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid `{field}`: {reason}")]
    Invalid { field: String, reason: String },
    #[error("{}: {reason}", path.display())]
    Data { path: PathBuf, reason: String },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] crate::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } => EXIT_IO,
            _ => EXIT_USAGE,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "wskde", version, about = "Wilson score KDE experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Confidence-interval coverage curves against the test function.
    Coverage(RunArgs),
    /// Replicated optimization runs with pruning traces and a peak tally.
    Bo(RunArgs),
    /// Evaluate an estimator over a query grid for a supplied data file.
    Estimate(RunArgs),
    /// Combine peak tallies from completed `bo` output directories.
    PeakTable(RunArgs),
}

#[derive(Debug, clap::Args)]
pub struct RunArgs {
    /// TOML experiment config.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (overrides `output` in the config).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Base seed (overrides `seed` in the config).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Replication count (overrides `replications` in the config).
    #[arg(long)]
    pub replications: Option<usize>,
    /// Worker threads for replications; 1 runs sequentially.
    #[arg(long, value_parser = parse_jobs)]
    pub jobs: Option<usize>,
    /// Replication count and sample sizes of the original study.
    #[arg(long)]
    pub paper_scale: bool,
}

impl Command {
    fn parts(&self) -> (ExperimentKind, &RunArgs) {
        match self {
            Command::Coverage(a) => (ExperimentKind::Coverage, a),
            Command::Bo(a) => (ExperimentKind::Bo, a),
            Command::Estimate(a) => (ExperimentKind::Estimate, a),
            Command::PeakTable(a) => (ExperimentKind::PeakTable, a),
        }
    }
}

/// Loads the config for a parsed command line and runs it.
pub fn execute(cli: &Cli) -> Result<Vec<PathBuf>, CliError> {
    let (kind, args) = cli.command.parts();
    let mut cfg = load_config(&args.config, Some(kind))?;
    cfg.apply(&Overrides {
        output: args.out.clone(),
        seed: args.seed,
        replications: args.replications,
        paper_scale: args.paper_scale,
    })?;
    let exec = crate::parallel::Execution::from_jobs(args.jobs);
    commands::run(&cfg, exec)
}

/// Entry point shared by the binary and tests; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn parse_jobs(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(n) => Ok(n),
        Err(e) => Err(e.to_string()),
    }
}
