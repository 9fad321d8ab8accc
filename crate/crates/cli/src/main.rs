use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;

use commands::CliError;

#[derive(Debug, Parser)]
#[command(name = "specuq", version, about = "Spectral uncertainty quantification workflows")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct CommonArgs {
    /// JSON configuration file.
    #[arg(long, value_name = "PATH")]
    pub config: PathBuf,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long, value_name = "DIR")]
    pub output: Option<PathBuf>,
    /// Seed override.
    #[arg(long, value_name = "U64")]
    pub seed: Option<u64>,
    /// Keep per-sample predictive distributions in results.json.
    #[arg(long)]
    pub full: bool,
    /// Increase verbosity (-v, -vv).
    #[arg(short, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic problem: model.json, train.json, test.json, metadata.json.
    Generate(CommonArgs),
    /// Fit the variational posterior: posterior.json, trace.csv, training.json.
    Train(CommonArgs),
    /// Predictive distributions at given inputs: predictions.json.
    Predict(CommonArgs),
    /// Gaussian uncertainty propagation through one matrix: uncertainty.json.
    Propagate(CommonArgs),
    /// Calibration and accuracy on the test split: metrics.csv, results.json.
    Evaluate(CommonArgs),
    /// Deployment score and feasibility verdict: score.json.
    Score(CommonArgs),
    /// Full experiment grid: results.json, metrics.csv, trace.csv.
    Bench(CommonArgs),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Generate(a) => commands::generate(a),
        Command::Train(a) => commands::train(a),
        Command::Predict(a) => commands::predict(a),
        Command::Propagate(a) => commands::propagate(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Score(a) => commands::score(a),
        Command::Bench(a) => commands::bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError { code, message }) => {
            eprintln!("error: {message}");
            ExitCode::from(code)
        }
    }
}
