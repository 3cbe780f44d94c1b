//! Experiment harness around the `misdirection` solvers.
//!
//! `run` parses arguments, executes one subcommand and returns the process
//! exit code: 0 on success (an unconverged optimizer is still a success),
//! 1 for usage, configuration and IO problems, 2 for numerical failures and
//! failed validation checks.

pub mod checks;
pub mod commands;
pub mod config;
pub mod output;
pub mod plot;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use misdirection::Error;

use crate::commands::{ChecksFailed, Context};
use crate::config::{ConfigError, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "misdirection", version, about = "Deception-aware LQ control experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// JSON configuration with flat dotted keys; defaults apply to missing keys.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Output directory (overrides `output_dir`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Master seed (overrides `seed`).
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Monte Carlo worker threads (overrides `mc.threads`).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Also write SVG plots.
    #[arg(long, global = true)]
    pub plots: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Solve the blue team's problem and simulate it.
    BlueSolve,
    /// Optimize the red team's pattern.
    RedOptimize,
    /// Play repeated red and blue rounds.
    Stackelberg,
    /// Run the invariant suite.
    Validate,
}

fn context(cli: &Cli) -> Result<Context, ConfigError> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(threads) = cli.threads {
        config.threads = Some(threads);
    }
    if let Some(out) = &cli.out {
        config.output_dir = Some(out.clone());
    }
    let out = config.output_dir.clone().unwrap_or_else(|| PathBuf::from("out"));
    Ok(Context {
        config,
        out,
        plots: cli.plots,
    })
}

/// Exit code for an error coming out of a command.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.is::<ConfigError>() || cause.is::<std::io::Error>() {
            return 1;
        }
        if cause.is::<ChecksFailed>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::LambdaOutOfRange { .. }
                | Error::NonPositiveWeight { .. }
                | Error::NonPositiveHorizon(_)
                | Error::InvalidGrid(_)
                | Error::NotSimplifiedModel
                | Error::Unsupported(_)
                | Error::InvalidArgument(_) => 1,
                _ => 2,
            };
        }
    }
    1
}

pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let ctx = match context(&cli) {
        Ok(ctx) => ctx,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    let result = match cli.command {
        Command::BlueSolve => commands::blue_solve(&ctx),
        Command::RedOptimize => commands::red_optimize(&ctx),
        Command::Stackelberg => commands::stackelberg(&ctx),
        Command::Validate => commands::validate(&ctx),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}
