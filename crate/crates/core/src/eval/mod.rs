//! Evaluation: ROC analysis, leave-one-patient-out folds, the per-fold
//! training pipeline and the hyperparameter grid search.

pub mod baseline;
pub mod cv;
mod float_text;
pub mod grid;
pub mod report;
pub mod roc;

use thiserror::Error;

use crate::balance::BalanceError;
use crate::features::FeatureError;
use crate::nnet::NnetError;

pub use baseline::{energy_baseline_auc, energy_baseline_loocv, event_energy};
pub use cv::{
    evaluate_fold, fit_fold, loocv, loocv_folds, summarize, CvSummary, FittedFold, Fold, FoldReport,
    PipelineConfig, DEFAULT_THRESHOLD,
};
pub use grid::{grid_points, grid_search, point_seed, GridPoint, GridResult, GridSpec};
pub use report::{
    mean_roc_csv, mean_roc_svg, report_csv, roc_points_csv, thresholds_csv, write_reports, REPORT_COLUMNS,
    THRESHOLD_COLUMNS,
};
pub use roc::{
    auc, mean_roc, metrics_at_threshold, roc_auc, roc_curve, youden_threshold, MeanRoc, RocPoint,
    ThresholdMetrics,
};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("{scores} scores but {labels} labels")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("only one class present")]
    SingleClass,
    #[error("{0}")]
    Empty(String),
    #[error("leave-one-patient-out needs at least 2 patients, got {0}")]
    TooFewPatients(usize),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Balance(#[from] BalanceError),
    #[error(transparent)]
    Nnet(#[from] NnetError),
    #[error("{0}")]
    Io(String),
}
