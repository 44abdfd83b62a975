//! `lexpredict`: scoring, baselines and toy-model training for lexical
//! response prediction, as reproducible file-in/file-out pipelines.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lexpredict::corpus::Partition;
use lexpredict::predictions::DEFAULT_FLOOR;
use lexpredict::toymodel::{FeatureSpec, Objective};
use lexpredict::trainer::{Checkpoint, ScheduleKind};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "lexpredict", version, about = "Score and train predictive models of listener word responses")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args, Serialize)]
struct GlobalArgs {
    /// CMU-format pronunciation dictionary for homophone-aware matching.
    #[arg(long, global = true)]
    lexicon: Option<PathBuf>,
    /// Probability assigned to observed responses the model does not score [default: 1e-10].
    #[arg(long, global = true)]
    floor: Option<f64>,
    /// Divide looked-up probabilities by the candidate set's total mass.
    #[arg(long, global = true)]
    renormalize: bool,
    /// Random seed [default: 0, or the seed in a training config file].
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory receiving every output file and its run manifest.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    /// Require 15 listeners and a response shared by at least 6 of them.
    #[arg(long, global = true)]
    strict_eccc: bool,
}

impl GlobalArgs {
    fn floor(&self) -> f64 {
        self.floor.unwrap_or(DEFAULT_FLOOR)
    }

    fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Assign trials to train/dev/test, stratified by masker.
    Split(SplitArgs),
    /// Generate a synthetic corpus with known response distributions.
    Synth(SynthArgs),
    /// Write predictions of a reference baseline.
    Baseline(BaselineArgs),
    /// Score predictions (or toy-model parameters) against a corpus.
    Evaluate(EvaluateArgs),
    /// Train the toy log-linear model with one configuration.
    TrainToy(TrainArgs),
    /// Train over a hyperparameter grid and keep the best dev score.
    Grid(GridArgs),
    /// Check a prediction file against the format invariants.
    ValidatePredictions(ValidateArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
struct CorpusArgs {
    /// Corpus manifest (JSON Lines).
    #[arg(long)]
    corpus: PathBuf,
    /// Split assignment written by `split`.
    #[arg(long)]
    split: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
struct SplitArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value_t = 0.8)]
    train: f64,
    #[arg(long, default_value_t = 0.1)]
    dev: f64,
    #[arg(long, default_value_t = 0.1)]
    test: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
struct SynthArgs {
    #[arg(long, default_value_t = 500)]
    trials: usize,
    #[arg(long, default_value_t = 15)]
    listeners: u32,
    /// Dirichlet concentration; smaller is more peaked.
    #[arg(long, default_value_t = 0.3)]
    concentration: f64,
    /// Word list, one per line; defaults to a built-in set of 64 short words.
    #[arg(long)]
    vocab: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum BaselineKind {
    Random,
    Multinomial,
    Oracle,
}

#[derive(Debug, Clone, Args, Serialize)]
struct BaselineArgs {
    #[arg(long, value_enum)]
    kind: BaselineKind,
    #[command(flatten)]
    data: CorpusArgs,
    /// Only predict trials of this partition.
    #[arg(long)]
    partition: Option<Partition>,
    /// Vocabulary size of the random model; defaults to the corpus response vocabulary.
    #[arg(long)]
    vocab_size: Option<usize>,
    /// Add-alpha smoothing of the multinomial model.
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
struct EvaluateArgs {
    #[command(flatten)]
    data: CorpusArgs,
    /// Prediction file (JSON Lines).
    #[arg(long, conflicts_with = "params", required_unless_present = "params")]
    predictions: Option<PathBuf>,
    /// Toy-model parameters written by `train-toy` or `grid`.
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long)]
    partition: Option<Partition>,
    /// Model name for the report; defaults to the name in the predictions.
    #[arg(long)]
    model: Option<String>,
}

#[derive(Debug, Clone, Args, Serialize)]
struct TrainArgs {
    #[command(flatten)]
    data: CorpusArgs,
    #[arg(long, default_value = "pred-all")]
    objective: Objective,
    /// Feature set, e.g. `one-hot-spoken` or `one-hot-spoken+bag-of-phonemes`.
    #[arg(long, default_value = "one-hot-spoken")]
    features: FeatureSpec,
    /// JSON training config; flags given explicitly take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    warmup: Option<f64>,
    #[arg(long)]
    schedule: Option<ScheduleKind>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    init_scale: Option<f64>,
    /// `best-dev` (default) or `last`.
    #[arg(long)]
    checkpoint: Option<Checkpoint>,
    #[arg(long, value_enum, default_value_t = Precision::F64)]
    precision: Precision,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Precision {
    F32,
    F64,
}

#[derive(Debug, Clone, Args, Serialize)]
struct GridArgs {
    #[command(flatten)]
    train: TrainArgs,
    /// Peak learning rates to try (comma separated).
    #[arg(long, value_delimiter = ',')]
    lrs: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    warmups: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    schedules: Option<Vec<ScheduleKind>>,
    #[arg(long = "epoch-grid", value_delimiter = ',')]
    epoch_grid: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Args, Serialize)]
struct ValidateArgs {
    #[arg(long)]
    predictions: PathBuf,
    /// Also require a set for every trial and a score for every observed response.
    #[arg(long)]
    corpus: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli.global, cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(commands::exit_code(&err))
        }
    }
}
