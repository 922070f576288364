//! `causal-patterns`: generate synthetic recordings, preprocess them, fit
//! mixtures of probabilistic partial CCA and report clusterwise Granger
//! causality.
//!
//! Exit codes: 0 success, 2 usage or input error, 3 fit stopped at the
//! iteration limit (artifacts are still written), 1 any other failure.

mod commands;
mod config;
mod exit;
mod pipeline;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::FileConfig;
use crate::exit::{CliError, CliResult, EXIT_NOT_CONVERGED};

#[derive(Debug, Parser)]
#[command(name = "causal-patterns", version, about, long_about = None)]
struct Cli {
    /// TOML file with default values for any option; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Upper bound on worker threads.
    #[arg(long, global = true, env = "CAUSAL_PATTERNS_THREADS")]
    threads: Option<usize>,
    /// More log output (-v info, -vv debug); RUST_LOG overrides.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a seeded synthetic recording as CSV.
    Generate(commands::GenerateArgs),
    /// Build the regression blocks and store the preprocessing.
    Preprocess(commands::PreprocessArgs),
    /// Fit a mixture model; writes model.json, resp.csv, trace.csv, preprocess.json.
    Fit(commands::FitArgs),
    /// Score a fitted model against ground-truth labels and a k-means baseline.
    Eval(commands::EvalArgs),
    /// Granger-causality index per cluster for given labels.
    Gc(commands::GcArgs),
}

/// Outcome of a command that ran to completion.
pub enum Status {
    Done,
    NotConverged,
}

fn run(cli: Cli) -> CliResult<Status> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::input(anyhow::anyhow!("thread count must be at least 1")));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::from(anyhow::Error::from(e)))?;
    }
    let file = match &cli.config {
        Some(path) => FileConfig::load(path).map_err(CliError::input)?,
        None => FileConfig::default(),
    };
    match cli.command {
        Command::Generate(args) => commands::generate(&args, &file),
        Command::Preprocess(args) => commands::preprocess(&args, &file),
        Command::Fit(args) => commands::fit(&args, &file),
        Command::Eval(args) => commands::eval(&args, &file),
        Command::Gc(args) => commands::gc(&args, &file),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(Status::Done) => ExitCode::SUCCESS,
        Ok(Status::NotConverged) => ExitCode::from(EXIT_NOT_CONVERGED),
        Err(e) => {
            eprintln!("error: {:#}", e.error);
            e.exit_code()
        }
    }
}
