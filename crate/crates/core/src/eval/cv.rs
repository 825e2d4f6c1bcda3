//! Leave-one-patient-out cross-validation.
//!
//! Per fold: fit the standardizer on the training matrices, standardize,
//! oversample the training set with SMOTE, train a fresh model and score the
//! held-out patient. The test matrices are only touched by `evaluate_fold`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::roc::{self, mean_std, MeanRoc, RocPoint, ThresholdMetrics};
use super::EvalError;
use crate::balance::{balance_training_set, SmoteConfig};
use crate::corpus::{Dataset, Label};
use crate::features::{FeatureMatrix, Standardizer};
use crate::nnet::{predict_proba, train, Architecture, Model, TrainConfig, TrainReport};
use crate::seed::derive_seed;

/// Scores at or above this are called coughs in the main report.
pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub index: usize,
    pub test_patient: String,
    /// Event indices.
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// One fold per patient, in sorted patient order.
pub fn folds_for<'a>(
    patients: impl IntoIterator<Item = &'a String>,
    event_patients: &[&str],
) -> Result<Vec<Fold>, EvalError> {
    let patients: Vec<&String> = patients.into_iter().collect();
    if patients.len() < 2 {
        return Err(EvalError::TooFewPatients(patients.len()));
    }
    Ok(patients
        .iter()
        .enumerate()
        .map(|(index, p)| {
            let (test, train): (Vec<usize>, Vec<usize>) =
                (0..event_patients.len()).partition(|&i| event_patients[i] == p.as_str());
            Fold {
                index,
                test_patient: (*p).clone(),
                train,
                test,
            }
        })
        .collect())
}

pub fn loocv_folds(ds: &Dataset) -> Result<Vec<Fold>, EvalError> {
    let ids: Vec<&str> = ds.events().iter().map(|e| e.patient_id.as_str()).collect();
    folds_for(ds.patients(), &ids)
}

/// Everything that defines one model fit apart from the data and the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub architecture: Architecture,
    pub train: TrainConfig,
    /// `rng_seed` is replaced by a per-fold derived seed.
    pub smote: SmoteConfig,
}

pub struct FittedFold {
    pub standardizer: Standardizer,
    pub model: Model,
    pub train_report: TrainReport,
    pub synthetic: usize,
}

fn labels_of<'a>(matrices: impl IntoIterator<Item = &'a FeatureMatrix>) -> Vec<bool> {
    matrices.into_iter().map(|m| m.label.is_cough()).collect()
}

/// Fits standardizer, SMOTE and model on `fold.train` only.
pub fn fit_fold(
    features: &[FeatureMatrix],
    fold: &Fold,
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<FittedFold, EvalError> {
    if fold.train.is_empty() {
        return Err(EvalError::Empty(format!(
            "fold {} has no training events",
            fold.test_patient
        )));
    }
    let train_set: Vec<&FeatureMatrix> = fold.train.iter().map(|&i| &features[i]).collect();
    let standardizer = Standardizer::fit(train_set.iter().copied())?;
    let (rows, cols) = train_set[0].shape();
    let mut vectors = Vec::with_capacity(train_set.len());
    let mut labels = Vec::with_capacity(train_set.len());
    for m in &train_set {
        vectors.push(standardizer.apply(m)?.values);
        labels.push(m.label);
    }
    let smote = SmoteConfig {
        rng_seed: derive_seed(seed, &[0]),
        ..cfg.smote.clone()
    };
    let balanced = balance_training_set(&vectors, &labels, &smote)?;
    let matrices: Vec<FeatureMatrix> = balanced
        .features
        .into_iter()
        .zip(&balanced.labels)
        .map(|(values, &label)| FeatureMatrix {
            rows,
            cols,
            values,
            patient_id: String::new(),
            label,
        })
        .collect();
    let class: Vec<usize> = balanced.labels.iter().map(|l| l.class_index()).collect();
    let mut model = Model::build(cfg.architecture.clone(), (rows, cols), derive_seed(seed, &[1]))?;
    let train_cfg = TrainConfig {
        rng_seed: derive_seed(seed, &[2]),
        ..cfg.train.clone()
    };
    let train_report = train(&mut model, &matrices, &class, &train_cfg)?;
    Ok(FittedFold {
        standardizer,
        model,
        train_report,
        synthetic: balanced.synthetic,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub index: usize,
    pub test_patient: String,
    pub coughs: usize,
    pub non_coughs: usize,
    pub roc: Vec<RocPoint>,
    pub auc: f64,
    pub threshold: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub accuracy: f64,
    pub youden_threshold: f64,
    pub youden: ThresholdMetrics,
    #[serde(with = "super::float_text")]
    pub final_train_loss: f64,
    pub synthetic: usize,
}

pub fn fold_scores(
    fitted: &FittedFold,
    features: &[FeatureMatrix],
    fold: &Fold,
) -> Result<Vec<f64>, EvalError> {
    let test: Vec<FeatureMatrix> = fold
        .test
        .iter()
        .map(|&i| fitted.standardizer.apply(&features[i]))
        .collect::<Result<_, _>>()?;
    Ok(predict_proba(&fitted.model, &test)?)
}

pub fn evaluate_fold(
    fitted: &FittedFold,
    features: &[FeatureMatrix],
    fold: &Fold,
) -> Result<FoldReport, EvalError> {
    let scores = fold_scores(fitted, features, fold)?;
    let labels = labels_of(fold.test.iter().map(|&i| &features[i]));
    let curve = roc::roc_curve(&scores, &labels)?;
    let at = roc::metrics_at_threshold(&scores, &labels, DEFAULT_THRESHOLD)?;
    let youden_threshold = roc::youden_threshold(&curve);
    let youden = roc::metrics_at_threshold(&scores, &labels, youden_threshold)?;
    let coughs = labels.iter().filter(|&&l| l).count();
    Ok(FoldReport {
        index: fold.index,
        test_patient: fold.test_patient.clone(),
        coughs,
        non_coughs: labels.len() - coughs,
        auc: roc::auc(&curve),
        roc: curve,
        threshold: DEFAULT_THRESHOLD,
        sensitivity: at.sensitivity,
        specificity: at.specificity,
        accuracy: at.accuracy,
        youden_threshold,
        youden,
        final_train_loss: fitted.train_report.loss_curve.last().copied().unwrap_or(f64::NAN),
        synthetic: fitted.synthetic,
    })
}

/// Seed of fold `index` within a run seeded with `seed`.
pub fn fold_seed(seed: u64, index: usize) -> u64 {
    derive_seed(seed, &[index as u64])
}

pub fn run_fold(
    features: &[FeatureMatrix],
    fold: &Fold,
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<FoldReport, EvalError> {
    let fitted = fit_fold(features, fold, cfg, fold_seed(seed, fold.index))?;
    evaluate_fold(&fitted, features, fold)
}

/// Fold metrics averaged across folds; each fold counts once.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvSummary {
    pub folds: Vec<FoldReport>,
    pub mean_spec: f64,
    pub mean_sens: f64,
    pub mean_accuracy: f64,
    pub mean_auc: f64,
    pub mean_roc: MeanRoc,
    pub mean_youden_threshold: f64,
    pub mean_youden_spec: f64,
    pub mean_youden_sens: f64,
}

pub fn summarize(folds: Vec<FoldReport>) -> Result<CvSummary, EvalError> {
    let mean = |f: fn(&FoldReport) -> f64| mean_std(&folds.iter().map(f).collect::<Vec<_>>()).0;
    let curves: Vec<Vec<RocPoint>> = folds.iter().map(|f| f.roc.clone()).collect();
    let mean_roc = roc::mean_roc(&curves)?;
    Ok(CvSummary {
        mean_spec: mean(|f| f.specificity),
        mean_sens: mean(|f| f.sensitivity),
        mean_accuracy: mean(|f| f.accuracy),
        mean_auc: mean_roc.mean_auc,
        mean_roc,
        mean_youden_threshold: mean(|f| f.youden_threshold),
        mean_youden_spec: mean(|f| f.youden.specificity),
        mean_youden_sens: mean(|f| f.youden.sensitivity),
        folds,
    })
}

/// Runs every fold (in parallel on the current rayon pool) and summarizes.
pub fn loocv(
    features: &[FeatureMatrix],
    folds: &[Fold],
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<CvSummary, EvalError> {
    let reports = folds
        .par_iter()
        .map(|fold| run_fold(features, fold, cfg, seed))
        .collect::<Result<Vec<_>, _>>()?;
    summarize(reports)
}

impl Fold {
    pub fn label_counts(&self, features: &[FeatureMatrix], test: bool) -> (usize, usize) {
        let idx = if test { &self.test } else { &self.train };
        let coughs = idx.iter().filter(|&&i| features[i].label == Label::Cough).count();
        (coughs, idx.len() - coughs)
    }
}
