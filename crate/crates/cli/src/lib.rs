//! Command-line front end and HTTP server for the labor risk simulator.

pub mod http;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use labrisk_core::experiment::{cmd_compare, cmd_evaluate, cmd_fit, cmd_simulate, ExperimentConfig, Manifest};
use labrisk_core::scm::Mode;
use labrisk_core::{Error, ErrorKind};

#[derive(Debug, Parser)]
#[command(name = "labrisk", version, about = "Simulate labors, evaluate true risks and compare estimators")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a dataset under usual care.
    Simulate(ExperimentArgs),
    /// Compute oracle risks at sampled conditions.
    Evaluate(ExperimentArgs),
    /// Fit the naive, g-computation and ICE estimators.
    Fit(ExperimentArgs),
    /// Fit every estimator and compare against the oracle.
    Compare(ExperimentArgs),
    /// Serve the session API over HTTP.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// Experiment configuration (JSON).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the seed in the configuration.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// coarse or continuous.
    #[arg(long)]
    pub mode: Option<Mode>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: String,
    /// Persons simulated to fit the models behind `source=gcomp` queries.
    #[arg(long, default_value_t = 20_000)]
    pub training_persons: usize,
    #[arg(long, default_value_t = 20_240_601)]
    pub training_seed: u64,
}

impl ExperimentArgs {
    pub fn config(&self) -> labrisk_core::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = Some(seed);
        }
        if let Some(out) = &self.out {
            cfg.out_dir = out.clone();
        }
        if let Some(mode) = self.mode {
            cfg.mode = Some(mode);
        }
        Ok(cfg)
    }
}

pub fn exit_code(kind: ErrorKind) -> i32 {
    match kind {
        ErrorKind::Usage => 2,
        ErrorKind::Data | ErrorKind::NotFound | ErrorKind::Conflict => 3,
        ErrorKind::NonConvergence => 4,
    }
}

/// Run one experiment command.
pub fn run_experiment(command: &Command) -> Result<Manifest, Error> {
    let (run, args): (fn(&ExperimentConfig) -> labrisk_core::Result<Manifest>, _) = match command {
        Command::Simulate(a) => (cmd_simulate, a),
        Command::Evaluate(a) => (cmd_evaluate, a),
        Command::Fit(a) => (cmd_fit, a),
        Command::Compare(a) => (cmd_compare, a),
        Command::Serve(_) => unreachable!("serve is not an experiment"),
    };
    run(&args.config()?)
}
