use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use rankcorrect::data::InputFormat;
use rankcorrect::sampling::ReplacementMode;
use rankcorrect::train::{Algorithm, TrainOverrides};
use rankcorrect::{Correction, LossKind, Partition};

#[derive(Parser, Debug)]
#[command(name = "rankcorrect", version, about = "Pairwise ranking factorization with sampled-rank correction")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Parse, filter and split an interaction log into a dataset cache.
    Prep(PrepArgs),
    /// Train a factor model on a prepared dataset.
    Train(TrainArgs),
    /// Evaluate a checkpoint on the tuning or test users.
    Eval(EvalArgs),
    /// Monte-Carlo study of sampled and corrected ranks.
    Simulate(SimulateArgs),
    /// Train over a grid of negative sample sizes, correction modes and seeds.
    Sweep(SweepArgs),
}

#[derive(Args, Debug)]
pub struct SyntheticArgs {
    /// Generate a planted low-rank dataset instead of reading a log.
    #[arg(long = "synthetic", conflicts_with = "input")]
    pub enabled: bool,
    /// Synthetic users [default: 500]
    #[arg(long, requires = "enabled")]
    pub users: Option<usize>,
    /// Synthetic items [default: 200]
    #[arg(long, requires = "enabled")]
    pub items: Option<usize>,
    /// Rank of the planted factors [default: 8]
    #[arg(long, requires = "enabled")]
    pub true_dim: Option<usize>,
    /// Positives per synthetic user [default: 20]
    #[arg(long, requires = "enabled")]
    pub per_user: Option<usize>,
    /// Seed of the planted factors [default: 0]
    #[arg(long, requires = "enabled")]
    pub synthetic_seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct PrepArgs {
    /// Interaction log with a header row: user, item[, rating[, timestamp]].
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Log format [default: from the file extension, .tsv or csv]
    #[arg(long)]
    pub format: Option<InputFormat>,
    #[command(flatten)]
    pub synthetic: SyntheticArgs,
    /// TOML file with preprocessing settings; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Drop users with fewer interactions [default: 1]
    #[arg(long)]
    pub min_user_interactions: Option<usize>,
    /// Drop items with fewer interactions [default: 1]
    #[arg(long)]
    pub min_item_interactions: Option<usize>,
    /// Keep rated rows only when rated at least this [default: keep all]
    #[arg(long)]
    pub rating_threshold: Option<f64>,
    /// Share of an evaluation user's items held out [default: 0.2]
    #[arg(long)]
    pub holdout_fraction: Option<f64>,
    /// Evaluation users, half tuning and half test [default: 1000]
    #[arg(long)]
    pub n_eval_users: Option<usize>,
    /// Seed of the evaluation split [default: 0]
    #[arg(long)]
    pub split_seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Rebuild even when a matching cache exists.
    #[arg(long)]
    pub force: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    #[default]
    F64,
}

/// Training settings shared by `train` and `sweep`.
#[derive(Args, Debug)]
pub struct TrainFlags {
    /// iterative or batched [default: batched]
    #[arg(long)]
    pub algorithm: Option<Algorithm>,
    /// warp or lambdarank [default: lambdarank]
    #[arg(long)]
    pub loss: Option<LossKind>,
    /// none or corrected [default: corrected]
    #[arg(long)]
    pub correction: Option<Correction>,
    /// Positives per batch [default: 64]
    #[arg(long)]
    pub k: Option<usize>,
    /// Negatives per batch [default: 64]
    #[arg(long)]
    pub m: Option<usize>,
    /// Learning rate [default: 0.05]
    #[arg(long)]
    pub eta: Option<f64>,
    /// L2 weight decay on touched rows [default: 0]
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Embedding dimension [default: 32]
    #[arg(long)]
    pub dim: Option<usize>,
    /// Epoch budget [default: 20]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// WARP rejection cap [default: 1000]
    #[arg(long)]
    pub max_trials: Option<usize>,
    /// Master seed [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Negative sampling with or without replacement [default: with]
    #[arg(long)]
    pub replacement: Option<ReplacementMode>,
    /// Epochs between tuning evaluations [default: 1]
    #[arg(long)]
    pub eval_every: Option<usize>,
    /// Evaluations without improvement before stopping, 0 = never [default: 0]
    #[arg(long)]
    pub patience: Option<usize>,
    /// Threads for batch computation; results do not depend on it [default: 1]
    #[arg(long)]
    pub threads: Option<usize>,
    /// Parameter precision [default: f64]
    #[arg(long, value_enum)]
    pub precision: Option<Precision>,
}

impl TrainFlags {
    pub fn overrides(&self) -> TrainOverrides {
        TrainOverrides {
            loss: self.loss,
            algorithm: self.algorithm,
            correction: self.correction,
            k: self.k,
            m: self.m,
            eta: self.eta,
            lambda: self.lambda,
            dim: self.dim,
            epochs: self.epochs,
            max_trials: self.max_trials,
            seed: self.seed,
            replacement_mode: self.replacement,
            eval_every: self.eval_every,
            early_stop_patience: self.patience,
            threads: self.threads,
        }
    }
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Dataset cache [default: OUT/dataset.cache]
    #[arg(long)]
    pub cache: Option<PathBuf>,
    /// TOML file with training settings; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub train: TrainFlags,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Dataset cache [default: OUT/dataset.cache]
    #[arg(long)]
    pub cache: Option<PathBuf>,
    /// Checkpoint [default: OUT/model.ckpt]
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Users to evaluate: tuning or test
    #[arg(long, default_value = "test")]
    pub partition: Partition,
    /// Extra NDCG cutoffs, comma separated
    #[arg(long, value_delimiter = ',')]
    pub ndcg_cutoffs: Vec<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Catalog size
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    /// Planted full-catalog rank of the target item
    #[arg(long, default_value_t = 101)]
    pub true_rank: usize,
    /// Negatives per trial
    #[arg(long, default_value_t = 50)]
    pub m: usize,
    /// Monte-Carlo trials
    #[arg(long, default_value_t = 100_000)]
    pub trials: usize,
    /// Draws with or without replacement
    #[arg(long, default_value = "with")]
    pub mode: ReplacementMode,
    /// Seed
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    /// Dataset cache [default: OUT/dataset.cache]
    #[arg(long)]
    pub cache: Option<PathBuf>,
    /// TOML file with base training settings; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub train: TrainFlags,
    /// Negative sample sizes, comma separated
    #[arg(long, value_delimiter = ',', required = true)]
    pub ms: Vec<usize>,
    /// Correction modes, comma separated
    #[arg(long, value_delimiter = ',', default_value = "none,corrected")]
    pub corrections: Vec<Correction>,
    /// Seeds, comma separated
    #[arg(long, value_delimiter = ',', default_value = "0")]
    pub seeds: Vec<u64>,
    /// Extra NDCG cutoffs, comma separated
    #[arg(long, value_delimiter = ',')]
    pub ndcg_cutoffs: Vec<usize>,
    /// Partitions to report, comma separated
    #[arg(long, value_delimiter = ',', default_value = "test")]
    pub partitions: Vec<Partition>,
    /// Runs trained concurrently
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}
