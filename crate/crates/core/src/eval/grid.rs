//! Hyperparameter grid search over feature configs, classifiers and training
//! settings, each point scored by a full leave-one-patient-out run.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cv::{loocv_folds, run_fold, summarize, CvSummary, Fold, PipelineConfig};
use super::EvalError;
use crate::balance::SmoteConfig;
use crate::corpus::Dataset;
use crate::features::{featurize_all, FeatureConfig, FeatureMatrix};
use crate::nnet::{Architecture, ClassifierKind, TrainConfig};
use crate::seed::{derive_seed, stable_hash};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub features: Vec<FeatureConfig>,
    pub architectures: Vec<Architecture>,
    pub train: Vec<TrainConfig>,
    pub smote: SmoteConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub feature: FeatureConfig,
    pub pipeline: PipelineConfig,
}

impl GridPoint {
    pub fn kind(&self) -> ClassifierKind {
        self.pipeline.architecture.kind()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub point: GridPoint,
    pub seed: u64,
    pub summary: CvSummary,
}

/// Cartesian product in feature, architecture, train-config order.
pub fn grid_points(spec: &GridSpec) -> Vec<GridPoint> {
    let mut points = Vec::new();
    for feature in &spec.features {
        for architecture in &spec.architectures {
            for train in &spec.train {
                points.push(GridPoint {
                    feature: *feature,
                    pipeline: PipelineConfig {
                        architecture: architecture.clone(),
                        train: train.clone(),
                        smote: spec.smote.clone(),
                    },
                });
            }
        }
    }
    points
}

/// Seed of a grid point: depends on the point's configuration, not on its
/// position in the grid, so a point scores the same in any grid.
pub fn point_seed(seed: u64, point: &GridPoint) -> u64 {
    let text = serde_json::to_string(point).expect("grid points serialize");
    derive_seed(seed, &[stable_hash(&text)])
}

fn validate(spec: &GridSpec) -> Result<(), EvalError> {
    if spec.features.is_empty() || spec.architectures.is_empty() || spec.train.is_empty() {
        return Err(EvalError::Empty("grid has an empty axis".into()));
    }
    for f in &spec.features {
        f.validate()?;
    }
    for a in &spec.architectures {
        a.validate()?;
    }
    spec.smote.validate()?;
    Ok(())
}

/// Runs every (point, fold) task on the current rayon pool. Results are
/// ranked by mean AUC, ties kept in grid order.
pub fn grid_search(ds: &Dataset, spec: &GridSpec, seed: u64) -> Result<Vec<GridResult>, EvalError> {
    validate(spec)?;
    let folds = loocv_folds(ds)?;
    let features: Vec<Vec<FeatureMatrix>> = spec
        .features
        .iter()
        .map(|cfg| featurize_all(ds.events(), cfg))
        .collect::<Result<_, _>>()?;
    let points = grid_points(spec);
    let seeds: Vec<u64> = points.iter().map(|p| point_seed(seed, p)).collect();
    let per_feature = spec.architectures.len() * spec.train.len();
    let tasks: Vec<(usize, &Fold)> = (0..points.len())
        .flat_map(|p| folds.iter().map(move |f| (p, f)))
        .collect();
    let reports = tasks
        .par_iter()
        .map(|&(p, fold)| run_fold(&features[p / per_feature], fold, &points[p].pipeline, seeds[p]))
        .collect::<Result<Vec<_>, _>>()?;
    let mut results = Vec::with_capacity(points.len());
    let mut reports = reports.into_iter();
    for (point, seed) in points.into_iter().zip(seeds) {
        let folds: Vec<_> = reports.by_ref().take(folds.len()).collect();
        results.push(GridResult {
            point,
            seed,
            summary: summarize(folds)?,
        });
    }
    rank(&mut results);
    Ok(results)
}

/// Stable sort by descending mean AUC.
pub fn rank(results: &mut [GridResult]) {
    results.sort_by(|a, b| b.summary.mean_auc.total_cmp(&a.summary.mean_auc));
}

/// Highest-ranked result of each classifier kind, in kind order.
pub fn best_per_kind(ranked: &[GridResult]) -> Vec<&GridResult> {
    ClassifierKind::ALL
        .iter()
        .filter_map(|k| ranked.iter().find(|r| r.point.kind() == *k))
        .collect()
}
