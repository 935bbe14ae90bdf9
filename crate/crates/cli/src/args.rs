use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use semshield_core::ScoreMethod;

/// Interpretable confidence scores and error detection for classifiers.
#[derive(Debug, Parser)]
#[command(name = "semshield", version, about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a projection model from training features and labels.
    Fit(FitArgs),
    /// Explain each prediction and flag the ones the attributes disagree with.
    Detect(DetectArgs),
    /// Score a labelled test set with several methods and write ROC curves.
    Bench(BenchArgs),
    /// Generate a synthetic data set from a config file.
    Gen(GenArgs),
    /// Stream `example_id,distance` pairs.
    Score(ScoreArgs),
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long)]
    pub kb: PathBuf,
    #[arg(long, default_value_t = semshield_core::DEFAULT_LAMBDA)]
    pub lambda: f64,
    /// Added to every denominator of the solve; needed when the system is singular.
    #[arg(long, default_value_t = 0.0)]
    pub ridge: f64,
    /// Standardize feature columns before fitting.
    #[arg(long)]
    pub standardize: bool,
    #[arg(long)]
    pub out: PathBuf,
}

/// Model, KB, features and predictions: the inputs every projection-based command shares.
#[derive(Debug, Args)]
pub struct ProjectionInputs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub kb: PathBuf,
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub predictions: PathBuf,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[command(flatten)]
    pub inputs: ProjectionInputs,
    /// Output file for JSON lines; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[command(flatten)]
    pub inputs: ProjectionInputs,
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub kb: Option<PathBuf>,
    #[arg(long)]
    pub features: Option<PathBuf>,
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long)]
    pub predictions: PathBuf,
    #[arg(long)]
    pub probs: Option<PathBuf>,
    /// MC dropout samples in long format.
    #[arg(long)]
    pub mcd: Option<PathBuf>,
    /// Training features for the nearest-neighbour baseline.
    #[arg(long)]
    pub train_features: Option<PathBuf>,
    #[arg(long, default_value_t = semshield_core::confidence::DEFAULT_NND_K)]
    pub nnd_k: usize,
    /// Comma-separated subset of semantic, softmax, nnd, mcd.
    #[arg(long, value_delimiter = ',', required = true)]
    pub methods: Vec<ScoreMethod>,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the curves as `method,fpr,tpr,threshold` CSV.
    #[arg(long)]
    pub emit_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
}
