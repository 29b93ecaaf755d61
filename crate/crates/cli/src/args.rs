use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use recpca_core::recpca::{TransformMode, ALPHA_MAX};

#[derive(Debug, Parser)]
#[command(name = "recpca", version, about = "Graph-regularized PCA and loss-geometry diagnostics for sequential recommendation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic interaction log and item embeddings.
    Synth(SynthArgs),
    /// Build the item co-occurrence graph, optionally keeping each node's top-K edges.
    BuildGraph(BuildGraphArgs),
    /// Reduce embeddings with graph-regularized PCA.
    Recpca(RecpcaArgs),
    /// Report coherence, condition numbers and bound verdicts per instance.
    Diagnose(DiagnoseArgs),
    /// Train the sequential recommender and record per-epoch metrics.
    Train(TrainArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Default,
    Misaligned,
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 500)]
    pub items: usize,
    #[arg(long, default_value_t = 400)]
    pub users: usize,
    #[arg(long)]
    pub seed: u64,
    /// Log-normal spread of row norms; 0 gives equal norms.
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub clusters: Option<usize>,
    /// Leading (cluster-aligned) embedding coordinates.
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub distractor_dims: Option<usize>,
    #[arg(long)]
    pub jump_prob: Option<f64>,
    #[arg(long, value_enum, default_value_t = Preset::Default)]
    pub preset: Preset,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct BuildGraphArgs {
    #[arg(long)]
    pub interactions: PathBuf,
    /// Keep an edge when it is among either endpoint's K heaviest; omit for the full graph.
    #[arg(long)]
    pub topk: Option<usize>,
    /// Node count, when the catalogue has items that never occur in the log.
    #[arg(long)]
    pub num_items: Option<usize>,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeArg {
    Exact,
    Cheb1,
    Cheb2,
}

impl From<ModeArg> for TransformMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Exact => TransformMode::Exact,
            ModeArg::Cheb1 => TransformMode::Chebyshev1,
            ModeArg::Cheb2 => TransformMode::Chebyshev2,
        }
    }
}

fn parse_alpha(s: &str) -> Result<f64, String> {
    let a: f64 = s.parse().map_err(|_| format!("{s:?} is not a number"))?;
    if (0.0..=ALPHA_MAX).contains(&a) {
        Ok(a)
    } else {
        Err(format!(
            "alpha must lie in [0, {ALPHA_MAX}] so that I - alpha L stays positive semidefinite and has a real principal square root"
        ))
    }
}

#[derive(Debug, Args, Serialize)]
pub struct RecpcaArgs {
    #[arg(long)]
    pub embeddings: PathBuf,
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long, value_parser = parse_alpha)]
    pub alpha: f64,
    #[arg(long)]
    pub dim: usize,
    #[arg(long, value_enum, default_value_t = ModeArg::Exact)]
    pub mode: ModeArg,
    /// Subtract column means before fitting.
    #[arg(long)]
    pub center: bool,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LogitSource {
    /// Score validation prefixes with a trained checkpoint.
    Model,
    /// Read `target<TAB>comma-separated logits` lines.
    File,
}

#[derive(Debug, Args, Serialize)]
pub struct DiagnoseArgs {
    /// Item embeddings; defaults to the checkpoint's table with `--logits-from model`.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub logits_from: LogitSource,
    /// Logits file for `--logits-from file`.
    #[arg(long)]
    pub logits: Option<PathBuf>,
    /// Checkpoint directory for `--logits-from model`.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Interaction log whose held-out last items are scored with `--logits-from model`.
    #[arg(long)]
    pub interactions: Option<PathBuf>,
    /// Effective subspace size.
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(2..))]
    pub m: u64,
    #[arg(long, default_value_t = 200)]
    pub max_instances: usize,
    #[arg(long, default_value_t = 50)]
    pub max_seq_len: usize,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Switch {
    On,
    Off,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub interactions: PathBuf,
    /// `random` or the path of an EMB1 embedding table.
    #[arg(long, default_value = "random")]
    pub init: String,
    #[arg(long, value_enum, default_value_t = Switch::On)]
    pub normalize: Switch,
    /// Defaults to the init table's width, or 64 with random init.
    #[arg(long)]
    pub embed_dim: Option<usize>,
    #[arg(long, default_value_t = 64)]
    pub hidden_dim: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.0)]
    pub weight_decay: f64,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    /// Epochs without NDCG@10 improvement before stopping; 0 disables.
    #[arg(long, default_value_t = 10)]
    pub patience: usize,
    #[arg(long, default_value_t = 50)]
    pub max_seq_len: usize,
    #[arg(long, default_value_t = 10)]
    pub rho_m: usize,
    #[arg(long, default_value_t = 512)]
    pub rho_sample: usize,
    /// Drop users and items with fewer interactions, repeatedly.
    #[arg(long, default_value_t = 0)]
    pub min_count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(short, long)]
    pub output: PathBuf,
}
