use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use coughsense::nnet::{ClassifierKind, Optimizer};

/// Accelerometer cough detection: synthesis, detection, features, training
/// and leave-one-patient-out evaluation.
#[derive(Debug, Parser)]
#[command(name = "coughsense", version)]
pub struct Cli {
    /// Root seed; every random stream of the run is derived from it.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus with exact ground-truth annotations.
    Synth(SynthArgs),
    /// Find candidate events with the energy-threshold detector.
    Detect(DetectArgs),
    /// Turn annotated events into feature matrices.
    Featurize(FeaturizeArgs),
    /// Train one classifier on a feature file.
    Train(TrainArgs),
    /// Score a feature file with a trained model.
    Predict(PredictArgs),
    /// Leave-one-patient-out evaluation over a hyperparameter grid.
    Crossval(CrossvalArgs),
    /// Re-render report tables and plots from crossval results.
    Report(ReportArgs),
}

/// Where to read signals and annotations from.
#[derive(Debug, Args)]
pub struct CorpusArgs {
    /// Corpus directory holding `signals/` and `annotations.csv`.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Directory of per-patient signal CSVs (overrides `--corpus`).
    #[arg(long)]
    pub signals: Option<PathBuf>,
    /// Annotation CSV (overrides `--corpus`).
    #[arg(long)]
    pub annotations: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// JSON generator config; flags below override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub patients: Option<usize>,
    #[arg(long)]
    pub coughs_per_patient: Option<usize>,
    #[arg(long)]
    pub non_coughs_per_patient: Option<usize>,
    /// Standard deviation of the white sensor noise.
    #[arg(long)]
    pub noise_rms: Option<f64>,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[arg(long)]
    pub out: PathBuf,
    /// Energy window length in samples.
    #[arg(long, default_value_t = 16)]
    pub window_len: usize,
    /// Window stride in samples.
    #[arg(long, default_value_t = 8)]
    pub hop: usize,
    /// Multiplier on the median window energy.
    #[arg(long, default_value_t = 4.0)]
    pub threshold: f64,
    /// Shortest kept detection, in samples.
    #[arg(long, default_value_t = 20)]
    pub min_event_len: usize,
    /// Detections closer than this many samples are merged.
    #[arg(long, default_value_t = 30)]
    pub merge_gap: usize,
}

#[derive(Debug, Args)]
pub struct FeaturizeArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[arg(long)]
    pub out: PathBuf,
    /// Frame length Ψ in samples.
    #[arg(long, default_value_t = 32)]
    pub frame_len: usize,
    /// Segments C per event.
    #[arg(long, default_value_t = 10)]
    pub segments: usize,
}

/// Training settings shared by `train` and `crossval`.
#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    /// Learning rate; defaults to the architecture's own.
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long, default_value = "sgd")]
    pub optimizer: Optimizer,
    /// SMOTE neighbours.
    #[arg(long, default_value_t = 5)]
    pub smote_k: usize,
    /// Minority/majority ratio after oversampling.
    #[arg(long, default_value_t = 1.0)]
    pub target_ratio: f64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Feature file written by `featurize`.
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// cnn, lstm or resnet, with default hyperparameters.
    #[arg(long, default_value = "cnn")]
    pub classifier: ClassifierKind,
    /// JSON architecture spec; overrides `--classifier`.
    #[arg(long)]
    pub arch: Option<PathBuf>,
    #[command(flatten)]
    pub fit: FitArgs,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Checkpoint written by `train`.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Scores at or above this are called coughs.
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
}

#[derive(Debug, Args)]
pub struct CrossvalArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[arg(long)]
    pub out: PathBuf,
    /// Frame lengths Ψ; crossed with every `--segments` value.
    #[arg(long, value_delimiter = ',', num_args = 1.., default_value = "32")]
    pub frame_len: Vec<usize>,
    #[arg(long, value_delimiter = ',', num_args = 1.., default_value = "10")]
    pub segments: Vec<usize>,
    /// Use all six (Ψ, C) pairs of the feature grid.
    #[arg(long)]
    pub full_grid: bool,
    /// Classifier kinds, each with default hyperparameters.
    #[arg(long, value_delimiter = ',', num_args = 1.., default_value = "cnn")]
    pub classifier: Vec<ClassifierKind>,
    /// JSON grid spec; replaces every grid flag.
    #[arg(long)]
    pub grid: Option<PathBuf>,
    #[command(flatten)]
    pub fit: FitArgs,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// `results.json` written by `crossval`, or its directory.
    #[arg(long)]
    pub results: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Curves drawn in the SVG plot.
    #[arg(long, default_value_t = 6)]
    pub max_curves: usize,
}
