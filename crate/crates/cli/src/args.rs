use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "graybox",
    version,
    about = "Learn the reaction rate of a fedbatch bioreactor from simulated trajectories"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a train/validation/test corpus.
    Generate(GenerateArgs),
    /// Two-stage training on a corpus.
    Train(TrainArgs),
    /// Per-sample test losses and trajectories of a checkpoint.
    Eval(EvalArgs),
    /// Learned and true rate over the visited state region.
    ExportMu(ExportMuArgs),
}

/// Overrides shared by every command. Unset flags leave the configuration
/// file (or the built-in default) in place.
#[derive(Clone, Debug, Default, Args)]
pub struct CommonArgs {
    /// TOML configuration file; a run manifest is accepted as well.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Samples per split.
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Observation mask: s_only_dense, xs_every_8th or xs_dense.
    #[arg(long)]
    pub mask: Option<String>,
    /// Coarsening factor of the first training stage.
    #[arg(long)]
    pub coarsen: Option<usize>,
    #[arg(long)]
    pub epochs_max: Option<usize>,
    /// Gradient norm threshold, or `none`.
    #[arg(long)]
    pub clip_norm: Option<String>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Fail unless this coarsening factor divides the step count.
    #[arg(long)]
    pub coarsen_check: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub corpus: PathBuf,
    /// Start from these parameters instead of a random draw.
    #[arg(long)]
    pub init_checkpoint: Option<PathBuf>,
    /// Skip the coarse stage.
    #[arg(long)]
    pub stage2_only: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExportMuArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Corpus whose test trajectories define the region.
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Cells per axis of the occupancy grid.
    #[arg(long, default_value_t = 32)]
    pub cells: usize,
}
