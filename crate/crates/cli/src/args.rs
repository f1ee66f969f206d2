use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "obslab", version, about = "Image obfuscation versus CNN recognition experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Obfuscate one PGM/PPM image or a whole dataset.
    Obfuscate(ObfuscateArgs),
    /// Train a preset network on an obfuscated dataset.
    Train(TrainArgs),
    /// Score a checkpoint on a dataset.
    Evaluate(EvaluateArgs),
    /// Compare back-propagated and finite-difference gradients.
    Gradcheck(GradcheckArgs),
    /// Tabulate finished runs.
    Report(ReportArgs),
    /// Describe a dataset, image, checkpoint, P3 record or run directory.
    Inspect(InspectArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum DatasetKind {
    Mnist,
    Cifar10,
    Dir,
}

/// Dataset selection shared by several subcommands.
#[derive(Clone, Debug, Default, Args)]
pub struct DatasetArgs {
    #[arg(long, value_enum)]
    pub dataset: Option<DatasetKind>,
    /// Dataset directory.
    #[arg(long, value_name = "PATH")]
    pub data_root: Option<PathBuf>,
    /// Manifest for `--dataset dir` (default <data-root>/manifest.tsv).
    #[arg(long, value_name = "PATH")]
    pub manifest: Option<PathBuf>,
    /// Training items per class for `--dataset dir`.
    #[arg(long, value_name = "N")]
    pub train_per_class: Option<usize>,
}

/// At most one transform; `--quality` only refines `--p3`.
#[derive(Clone, Debug, Default, Args)]
#[group(id = "transform", multiple = false)]
pub struct ObfuscationArgs {
    /// Mosaic window size in pixels.
    #[arg(long, value_name = "N", group = "transform")]
    pub mosaic: Option<usize>,
    /// Gaussian blur sigma in pixels, or `auto` for max(2, width/16).
    #[arg(long, value_name = "SIGMA", group = "transform")]
    pub blur: Option<String>,
    /// P3 threshold on quantized AC coefficients.
    #[arg(long, value_name = "T", group = "transform")]
    pub p3: Option<u32>,
    /// No obfuscation.
    #[arg(long, group = "transform")]
    pub none: bool,
    /// JPEG quality whose tables quantize the P3 coefficients.
    #[arg(long, value_name = "Q", requires = "p3")]
    pub quality: Option<u32>,
}

#[derive(Debug, Args)]
pub struct ObfuscateArgs {
    /// Single PGM/PPM input image.
    #[arg(long = "in", value_name = "PATH", conflicts_with_all = ["dataset", "data_root"])]
    pub input: Option<PathBuf>,
    #[command(flatten)]
    pub data: DatasetArgs,
    #[command(flatten)]
    pub obfuscation: ObfuscationArgs,
    /// Output image (single mode) or directory (dataset mode).
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
    /// With `--p3` on a single image: also write the secret coefficients.
    #[arg(long, value_name = "PATH", requires = "p3")]
    pub secret: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// JSON experiment config; flags override its values.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub data: DatasetArgs,
    #[command(flatten)]
    pub obfuscation: ObfuscationArgs,
    /// Relative per-image blur sigma jitter (e.g. 0.1 for ±10%).
    #[arg(long, value_name = "X")]
    pub blur_jitter: Option<f64>,
    /// mnist, cifar10, att or facescrub (default follows the dataset).
    #[arg(long, value_name = "NAME")]
    pub preset: Option<String>,
    /// Override the preset's class count (face presets).
    #[arg(long, value_name = "N")]
    pub classes: Option<usize>,
    #[arg(long, value_name = "N")]
    pub epochs: Option<u32>,
    #[arg(long, value_name = "N")]
    pub batch: Option<usize>,
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
    #[arg(long, value_name = "X")]
    pub lr: Option<f64>,
    #[arg(long, value_name = "X")]
    pub momentum: Option<f64>,
    #[arg(long, value_name = "X")]
    pub wd: Option<f64>,
    #[arg(long, value_name = "X")]
    pub lr_decay: Option<f64>,
    /// Halve the learning rate every 25 epochs.
    #[arg(long)]
    pub cifar_schedule: bool,
    /// Train on the first N items only.
    #[arg(long, value_name = "N")]
    pub train_limit: Option<usize>,
    /// Test on the first N items only.
    #[arg(long, value_name = "N")]
    pub test_limit: Option<usize>,
    /// Store measured seconds in epochs.csv and report.json.
    #[arg(long)]
    pub wall_clock: bool,
    /// Run directory.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// After training, also report top-K of the best checkpoint.
    #[arg(long, value_name = "K")]
    pub top_k: Option<usize>,
    /// Only print the final summary.
    #[arg(long, short)]
    pub quiet: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SplitChoice {
    Train,
    Test,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Run directory: uses its best.ckpt and recorded config.
    #[arg(long, value_name = "DIR")]
    pub run: Option<PathBuf>,
    /// Checkpoint file (overrides the run's best.ckpt).
    #[arg(long, value_name = "PATH")]
    pub checkpoint: Option<PathBuf>,
    /// JSON experiment config describing the data.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub data: DatasetArgs,
    #[command(flatten)]
    pub obfuscation: ObfuscationArgs,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitChoice,
    #[arg(long, value_name = "K")]
    pub top_k: Option<usize>,
    /// Write metrics (with confusion matrix) as JSON.
    #[arg(long, value_name = "PATH")]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Preset name or `all`.
    #[arg(long, default_value = "all")]
    pub preset: String,
    /// Items in the checked batch (default depends on the preset's size).
    #[arg(long, value_name = "N")]
    pub batch: Option<usize>,
    #[arg(long, value_name = "N", default_value_t = 3)]
    pub samples: usize,
    #[arg(long, value_name = "X", default_value_t = 1e-5)]
    pub epsilon: f64,
    #[arg(long, value_name = "N", default_value_t = 0)]
    pub seed: u64,
    /// Maximum accepted relative error.
    #[arg(long, value_name = "X", default_value_t = 1e-4)]
    pub tolerance: f64,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Run directories (or report.json / epochs.csv files).
    #[arg(required = true, value_name = "RUN")]
    pub runs: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    /// Image, checkpoint, P3 record or run directory.
    #[arg(value_name = "PATH", required_unless_present = "dataset")]
    pub path: Option<PathBuf>,
    #[command(flatten)]
    pub data: DatasetArgs,
}
