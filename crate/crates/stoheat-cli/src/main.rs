//! Batch front end for the `stoheat` library.
//!
//! An experiment is described by a TOML file (every key can also be
//! overridden by a flag), executed without interaction, and leaves its
//! results as CSV/JSON artifacts plus a manifest that records every
//! input. Three verbs:
//!
//! - `run`      execute the weak/strong rate ladders and the moment
//!              probe, write artifacts, print a summary table
//! - `validate` check the config file and the model's declared bounds
//!              without running anything
//! - `oracle`   print closed-form tables for the linear additive case
//!              to cross-check Monte Carlo output
//!
//! Exit status: 0 on success, 1 on configuration or I/O errors, 2 when
//! a requested statistical assertion fails or a ladder resolves no
//! points.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod config;
mod experiment;

use config::Overrides;
use experiment::Outcome;

#[derive(Parser)]
#[command(
    name = "stoheat",
    version,
    about = "Convergence-rate experiments for the semilinear stochastic heat equation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured experiment and write artifacts.
    Run(Job),
    /// Check the config and the model's declared bounds; run nothing.
    Validate(Job),
    /// Print linear-additive closed-form tables for cross-checking.
    Oracle(Job),
}

#[derive(Args)]
struct Job {
    /// Experiment description file (TOML). Flags override its values.
    #[arg(long, value_name = "FILE")]
    config: PathBuf,

    #[command(flatten)]
    overrides: Overrides,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let job = match &cli.command {
        Command::Run(job) | Command::Validate(job) | Command::Oracle(job) => job,
    };
    let cfg = match config::load(&job.config, &job.overrides) {
        Ok(cfg) => cfg,
        Err(err) => {
            eprintln!("error: {err:#}");
            return ExitCode::from(1);
        }
    };
    let result = match &cli.command {
        Command::Run(_) => experiment::run(&cfg),
        Command::Validate(_) => experiment::validate(&cfg),
        Command::Oracle(_) => experiment::oracle(&cfg),
    };
    match result {
        Ok(Outcome::Pass) => ExitCode::SUCCESS,
        Ok(Outcome::StatisticalFailure) => ExitCode::from(2),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}
