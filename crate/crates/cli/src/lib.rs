//! Stage-by-stage command line for the recovery pipeline. Every stage
//! reads its inputs from and writes its outputs to one run directory.

pub mod config;
mod error;
pub mod manifest;
pub mod stages;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::RunConfig;
pub use error::CliError;
pub use stages::{run_stage, Layout, Stage};

#[derive(Debug, Parser)]
#[command(name = "regrowth", version, about = "Post-fire vegetation recovery: forecast, fit and cluster growth rates")]
pub struct Cli {
    /// Flat key = value run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the top-level `seed` of the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Generate synthetic fires with known recovery parameters.
    Synth,
    /// Mask, impute, de-seasonalize and scale; assign fire roles.
    Preprocess,
    /// Train the ConvLSTM on the train/val fires.
    Train,
    /// Roll the model forward on the held-out fires.
    Forecast,
    /// Fit logistic recovery curves to the actual frames.
    FitLogistic,
    /// Fit the Tucker regressors for k and L.
    TuckerFit,
    /// Regress k and L from the forecasts.
    PredictK,
    /// Compare predicted and fitted k on the held-out fires.
    Eval,
    /// Embed and cluster fires by location, recovery and rainfall.
    Cluster,
    /// Summarize the run in report.md.
    Report,
}

impl Command {
    pub fn stage(self) -> Stage {
        match self {
            Command::Synth => Stage::Synth,
            Command::Preprocess => Stage::Preprocess,
            Command::Train => Stage::Train,
            Command::Forecast => Stage::Forecast,
            Command::FitLogistic => Stage::FitLogistic,
            Command::TuckerFit => Stage::TuckerFit,
            Command::PredictK => Stage::PredictK,
            Command::Eval => Stage::Eval,
            Command::Cluster => Stage::Cluster,
            Command::Report => Stage::Report,
        }
    }
}

/// Resolves the configuration and runs the requested stage.
pub fn run(cli: &Cli) -> Result<String, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    run_stage(&cfg, cli.command.stage())
}
