mod commands;
mod run_config;

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

/// Gaussian splatting with eigenvalue shape-feature regularization.
#[derive(Debug, Parser)]
#[command(name = "geosplat", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic scene: cameras, ground-truth images, reference
    /// cloud and initial Gaussians.
    Synth(commands::SynthArgs),
    /// Train a Gaussian set from a run config.
    ///
    /// Defaults: feature planarity-knn, h_photo 0.05 (photometric weight),
    /// theta 0.2 (D-SSIM weight), k 50 neighbors, 15000 iterations.
    Train(commands::TrainArgs),
    /// Chamfer evaluation of a reconstruction against a reference cloud.
    Eval(commands::EvalArgs),
    /// Render a Gaussian set from one camera.
    Render(commands::RenderArgs),
    /// Per-point planarity, omnivariance and eigenentropy of a cloud.
    Features(commands::FeaturesArgs),
    /// Merge the summaries of several training runs into one table.
    Compare(CompareArgs),
}

#[derive(Debug, clap::Args)]
struct CompareArgs {
    /// Run output directories.
    #[arg(long, num_args = 1.., required = true)]
    runs: Vec<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => commands::synth(&a),
        Command::Train(a) => commands::train(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Render(a) => commands::render(&a),
        Command::Features(a) => commands::features(&a),
        Command::Compare(a) => commands::compare(&a.runs),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
