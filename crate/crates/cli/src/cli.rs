use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand};

use crate::commands;

#[derive(Debug, Parser)]
#[command(name = "flowdiff", version, about = "Diffusion-transformer surrogate for 2-D flow benchmarks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate train/test dataset containers
    Datagen(Args),
    /// Train a model; resumes from --checkpoint when given
    Train(Args),
    /// Sample predictions for selected test records
    Sample(Args),
    /// Score a checkpoint (or a prediction container) with relative L2
    Eval(Args),
    /// Train and score every cell of the configured ablation grids
    Ablate(Args),
    /// Render fields or truth/prediction/error panels to PNG
    Plot(Args),
}

#[derive(Debug, Clone, Default, clap::Args)]
pub struct Args {
    /// TOML run configuration
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Run output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides the seed of the command's config section
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Dataset directory (train.dfd, test.dfd) or a single container
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Record indices, e.g. "0,2,5-7"
    #[arg(long)]
    pub indices: Option<String>,
    /// Samples averaged per input
    #[arg(long)]
    pub ensemble: Option<usize>,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Datagen(a) => commands::datagen(&a),
        Command::Train(a) => commands::train(&a),
        Command::Sample(a) => commands::sample(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Ablate(a) => commands::ablate(&a),
        Command::Plot(a) => commands::plot(&a),
    }
}
