mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Equation discovery from noisy tables: generate data, train the network,
/// predict equations and fit their parameters.
#[derive(Debug, Parser)]
#[command(name = "symreg", version)]
pub struct Cli {
    /// Flat `key = value` config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override one config key, e.g. `--set train.batch_size=32`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub set: Vec<String>,
    /// Output directory for every file a command writes.
    #[arg(long, default_value = "run", global = true)]
    pub out: PathBuf,
    /// Master seed (config key `seed`).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a dataset, its train/validation split and a config snapshot.
    Gen {
        /// Number of stimuli (config key `data.pairs`, default 5000).
        #[arg(long)]
        pairs: Option<usize>,
    },
    /// Train a model; writes final and best checkpoints and metrics.
    Train {
        /// Dataset to train on [default: OUT/dataset.jsonl, generated if missing].
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Config key `train.epochs` (default 100).
        #[arg(long)]
        epochs: Option<usize>,
        /// Config key `train.batch_size` (default 64).
        #[arg(long)]
        batch_size: Option<usize>,
    },
    /// Predict an equation for a CSV table with header x1,...,xd,y.
    Predict(PredictArgs),
    /// Fit the parameters of an equation to a CSV table.
    Fit {
        /// Equation in token form, e.g. "( ( w1 * x1 ) + w2 )".
        #[arg(long)]
        equation: String,
        /// CSV table with header x1,...,xd,y.
        #[arg(long)]
        table: PathBuf,
    },
    /// Recover the hard-choice model from gamble tables.
    Casestudy {
        /// Use this model instead of training one on the restricted corpus.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Gamble CSV with columns p1,V1,p2,V2,choice instead of synthetic tables.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Recompute loss, parse rate and template match for a checkpoint.
    Eval {
        /// [default: OUT/best.ckpt.json]
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// [default: OUT/dataset.jsonl]
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// [default: OUT/best.ckpt.json]
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub table: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            if let Some(msg) = failure.message() {
                eprintln!("error: {msg}");
            }
            ExitCode::from(failure.code())
        }
    }
}
