use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "specsurv",
    version,
    about = "Spectral survival analysis",
    args_override_self = true
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a model and write model.csv, pi.csv, diag.csv, baseline.csv and metrics.csv.
    Fit(FitArgs),
    /// Score a saved model on a dataset and write metrics.csv.
    Evaluate(EvaluateArgs),
    /// Generate a synthetic dataset.
    Simulate(SimulateArgs),
    /// Closed-form versus Monte-Carlo mini-batch loss bias.
    BiasCheck(BiasArgs),
    /// Runtime and peak memory of each method over a sweep of sizes.
    Bench(BenchArgs),
    /// Fit over the fixed ρ grid and tabulate held-out metrics.
    RhoSweep(SweepArgs),
    /// One benchmark cell; run by `bench` in a child process.
    #[command(hide = true)]
    BenchCell(CellArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelKind {
    Coxph,
    Weighted,
    Hetero,
    Dhh,
    Aft,
    Counting,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Spectral,
    Gd,
    GdMinibatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BenchMethod {
    Spectral,
    GdFull,
    GdMinibatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Generator {
    Linear,
    Ads,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Strict,
    AllAnchors,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Init {
    Predictor,
    Uniform,
}

/// Where the data comes from: a CSV, or a seeded generator.
#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Survival CSV with `time`, `event` and feature columns.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Journey CSV for the counting model.
    #[arg(long, requires = "items")]
    pub journeys: Option<PathBuf>,
    /// Item feature CSV keyed by `item_id`.
    #[arg(long)]
    pub items: Option<PathBuf>,
    /// Column holding class labels (dhh, hetero).
    #[arg(long)]
    pub class_column: Option<String>,
    /// Generator used when no file is given.
    #[arg(long, value_enum, default_value = "linear")]
    pub generate: Generator,
    /// Samples (linear) or journeys (ads) to generate.
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    #[arg(long, default_value_t = 5)]
    pub d: usize,
    /// Target censoring fraction of the linear generator.
    #[arg(long, default_value_t = 0.3)]
    pub censor: f64,
    /// Most impressions per ADS journey.
    #[arg(long, default_value_t = 50)]
    pub max_items: usize,
    /// Classes assigned round-robin to generated data (dhh, hetero).
    #[arg(long, default_value_t = 2)]
    pub n_classes: usize,
    /// Fraction held out for evaluation.
    #[arg(long, default_value_t = 0.2)]
    pub holdout: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    #[arg(long, value_enum, default_value = "coxph")]
    pub model: ModelKind,
    #[arg(long, value_enum, default_value = "spectral")]
    pub method: Method,
    /// unit, censor-decay or file:<csv>.
    #[arg(long, default_value = "unit")]
    pub weights: String,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub rho: f64,
    /// Outer ADMM tolerance on both residuals.
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long, default_value_t = 1e-10)]
    pub inner_tol: f64,
    #[arg(long, default_value_t = 20_000)]
    pub max_outer: usize,
    #[arg(long, default_value_t = 200)]
    pub max_power: usize,
    /// Residual balancing of ρ.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    pub adaptive_rho: bool,
    #[arg(long, value_enum, default_value = "strict")]
    pub event_mode: Mode,
    #[arg(long, value_enum, default_value = "predictor")]
    pub init: Init,
    /// Hidden widths of a feed-forward predictor, e.g. `16,8`; linear when empty.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Vec<usize>,
    /// Step size of the gradient baselines.
    #[arg(long, default_value_t = 1.0)]
    pub lr: f64,
    /// Epoch cap of the gradient baselines and of each predictor refit.
    #[arg(long, default_value_t = 100_000)]
    pub epochs: usize,
    /// Gradient-norm tolerance of the gradient baselines.
    #[arg(long, default_value_t = 1e-8)]
    pub grad_tol: f64,
    /// Mini-batch size as a fraction of n.
    #[arg(long, default_value_t = 0.2)]
    pub batch_frac: f64,
    /// Outer rounds of the dhh/aft alternation.
    #[arg(long, default_value_t = 10)]
    pub rounds: usize,
    #[arg(long, default_value_t = 100)]
    pub grid: usize,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Flat `key = value` file of flag defaults; command-line flags win.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Predictor CSV written by `fit`.
    #[arg(long)]
    pub model_file: PathBuf,
    /// Baseline CSV written by `fit`; Breslow on the evaluated data otherwise.
    #[arg(long)]
    pub baseline_file: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "coxph")]
    pub model: ModelKind,
    #[arg(long, default_value_t = 100)]
    pub grid: usize,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct BiasArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_delimiter = ',', default_value = "2,5,8")]
    pub batch_sizes: Vec<usize>,
    #[arg(long, default_value_t = 100_000)]
    pub draws: usize,
    /// Batches enumerated exhaustively up to this count, sampled beyond it.
    #[arg(long, default_value_t = 1_000_000)]
    pub enum_cap: usize,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_value = "100,1000,10000")]
    pub ns: Vec<usize>,
    #[arg(
        long,
        value_enum,
        value_delimiter = ',',
        default_value = "spectral,gd-full,gd-minibatch"
    )]
    pub methods: Vec<BenchMethod>,
    #[arg(long, default_value_t = 50)]
    pub max_items: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Per-cell timeout in seconds.
    #[arg(long, default_value_t = 600.0)]
    pub timeout: f64,
    #[arg(long, default_value_t = 0.2)]
    pub batch_frac: f64,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct CellArgs {
    #[arg(long, value_enum)]
    pub method: BenchMethod,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub max_items: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub batch_frac: f64,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
}
