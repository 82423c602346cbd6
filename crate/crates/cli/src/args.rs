use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "ibplab",
    version,
    about = "Certified (IBP) training of two-layer ReLU networks with convergence diagnostics"
)]
pub struct Cli {
    /// Flat key=value file (or a run's config.json) supplying defaults for
    /// any flag; flags on the command line win.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Dataset preparation.
    Data {
        #[command(subcommand)]
        action: DataCommand,
    },
    /// Train one network and write a run directory.
    Train(TrainArgs),
    /// Train over a grid of widths or radii and aggregate final errors.
    Sweep(SweepArgs),
    /// Evaluate convergence diagnostics on an instrumented run directory.
    Theory(TheoryArgs),
    /// Certified (and optionally attacked) error of saved parameters.
    Certify(CertifyArgs),
    /// Gram matrix of saved or freshly initialized parameters.
    Gram(GramArgs),
}

#[derive(Debug, Subcommand)]
pub enum DataCommand {
    /// Build a normalized dataset cache from MNIST IDX files or a synthetic generator.
    Prepare(PrepareArgs),
}

#[derive(Debug, Args)]
pub struct PrepareArgs {
    /// Output cache file.
    #[arg(long)]
    pub out: PathBuf,
    /// Directory with train-images-idx3-ubyte and train-labels-idx1-ubyte.
    #[arg(long, conflicts_with = "synthetic")]
    pub mnist_dir: Option<PathBuf>,
    /// Positive and negative digit, e.g. `2,5`.
    #[arg(long, default_value = "2,5")]
    pub labels: String,
    /// Normalization radius: pixels map into [epsilon, 1].
    #[arg(long, default_value_t = 0.0)]
    pub epsilon: f64,
    /// Keep only the first N matching images.
    #[arg(long)]
    pub limit: Option<usize>,
    /// Average-pool images to SIDE x SIDE.
    #[arg(long, value_name = "SIDE")]
    pub downsample: Option<usize>,
    /// Generate unit vectors with a minimum pairwise angle instead.
    #[arg(long)]
    pub synthetic: bool,
    #[arg(long, default_value_t = 16)]
    pub n: usize,
    #[arg(long, default_value_t = 4)]
    pub d: usize,
    /// Minimum pairwise angle in radians.
    #[arg(long, default_value_t = 0.3)]
    pub separation: f64,
    /// Lower bound on every synthetic coordinate.
    #[arg(long, default_value_t = ibplab_core::data::DEFAULT_FLOOR)]
    pub floor: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    GdFlow,
    Sgd,
}

/// Flags shared by `train` and `sweep`.
#[derive(Debug, Clone, Args)]
pub struct TrainFlags {
    /// Dataset cache produced by `data prepare`.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 1024)]
    pub width: usize,
    #[arg(long, default_value_t = 0.0)]
    pub epsilon: f64,
    #[arg(long, value_enum, default_value_t = ModeArg::GdFlow)]
    pub mode: ModeArg,
    /// Defaults to 0.01 for gd-flow and 0.1 for sgd.
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Update count (gd-flow).
    #[arg(long, default_value_t = 1000)]
    pub steps: usize,
    /// Pass count (sgd).
    #[arg(long, default_value_t = 70)]
    pub epochs: usize,
    #[arg(long, default_value_t = ibplab_core::trainer::DEFAULT_BATCH_SIZE)]
    pub batch_size: usize,
    /// Keep the example order fixed in sgd.
    #[arg(long)]
    pub no_shuffle: bool,
    /// Seeds both the initialization and the batch order.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 10)]
    pub log_every: usize,
    /// Gram/spectrum/flip instrumentation cadence in steps (0 = never).
    #[arg(long, default_value_t = 0)]
    pub gram_every: usize,
    /// Ramp epsilon linearly from 0 starting at this step.
    #[arg(long, requires = "ramp_end")]
    pub ramp_start: Option<usize>,
    /// Step at which the ramp reaches the target epsilon.
    #[arg(long, requires = "ramp_start")]
    pub ramp_end: Option<usize>,
    #[arg(long, default_value_t = ibplab_core::trainer::DEFAULT_GRAM_CAP)]
    pub gram_cap: usize,
    #[arg(long, default_value_t = ibplab_core::trainer::DEFAULT_GRAM_SUBSAMPLE)]
    pub gram_subsample: usize,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub flags: TrainFlags,
    /// Run directory to create.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AxisArg {
    Width,
    Epsilon,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub flags: TrainFlags,
    #[arg(long, value_enum)]
    pub axis: AxisArg,
    /// Comma-separated, strictly increasing. Defaults to the built-in grid
    /// for the axis.
    #[arg(long, value_delimiter = ',')]
    pub values: Vec<f64>,
    #[arg(long, default_value_t = 1)]
    pub seeds_per_point: usize,
    /// Concurrent runs (default: available parallelism).
    #[arg(long)]
    pub workers: Option<usize>,
    /// Output directory for sweep.csv, the plot and per-run directories.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TheoryArgs {
    /// Run directory written by `train`.
    #[arg(long)]
    pub run: PathBuf,
    /// Confidence parameter of the threshold formulas.
    #[arg(long, default_value_t = 0.1)]
    pub delta: f64,
    #[arg(long, default_value_t = ibplab_core::theory::DEFAULT_M_PROBE)]
    pub m_probe: usize,
    #[arg(long, default_value_t = ibplab_core::theory::DEFAULT_NUM_INITS)]
    pub num_inits: usize,
    #[arg(long, default_value_t = 0)]
    pub hinf_seed: u64,
}

#[derive(Debug, Args)]
pub struct CertifyArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Checkpoint (params.bin).
    #[arg(long)]
    pub params: PathBuf,
    #[arg(long)]
    pub epsilon: f64,
    /// Also run a PGD attack to bound the true robust error from above.
    #[arg(long)]
    pub pgd: bool,
    #[arg(long, default_value_t = 40)]
    pub pgd_steps: usize,
    #[arg(long, default_value_t = 5)]
    pub pgd_restarts: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Per-example margins as CSV.
    #[arg(long, value_name = "FILE")]
    pub margins: Option<PathBuf>,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GramArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Checkpoint; without it a network is initialized from --width/--seed.
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[arg(long, default_value_t = 1024)]
    pub width: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.0)]
    pub epsilon: f64,
    /// Estimate the infinite-width Gram instead of evaluating one network.
    #[arg(long)]
    pub hinf: bool,
    #[arg(long, default_value_t = ibplab_core::theory::DEFAULT_M_PROBE)]
    pub m_probe: usize,
    #[arg(long, default_value_t = ibplab_core::theory::DEFAULT_NUM_INITS)]
    pub num_inits: usize,
    /// Matrix as CSV; the least eigenvalue is printed either way.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
