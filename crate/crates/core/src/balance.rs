//! SMOTE oversampling of the minority class.
//!
//! Synthetic vectors are placed on the segment between a random minority
//! vector and one of its `k` nearest minority neighbours (Euclidean).
//! Balancing is only ever applied to a training split.

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Label;
use crate::seed::rng_from_seed;

#[derive(Debug, Error, PartialEq)]
pub enum BalanceError {
    #[error("SMOTE needs more than k={k} minority samples, got {count}")]
    TooFewMinority { k: usize, count: usize },
    #[error("vector {index} has dimension {got}, expected {expected}")]
    Dimension {
        index: usize,
        expected: usize,
        got: usize,
    },
    #[error("cannot balance single-class data")]
    SingleClass,
    #[error("invalid SMOTE config: {0}")]
    Config(String),
    #[error("{features} feature vectors but {labels} labels")]
    LengthMismatch { features: usize, labels: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoteConfig {
    pub k_neighbors: usize,
    /// Minority/majority count ratio after balancing, in (0, 1].
    pub target_ratio: f64,
    pub rng_seed: u64,
}

impl Default for SmoteConfig {
    fn default() -> Self {
        SmoteConfig {
            k_neighbors: 5,
            target_ratio: 1.0,
            rng_seed: 0,
        }
    }
}

impl SmoteConfig {
    pub fn validate(&self) -> Result<(), BalanceError> {
        if self.k_neighbors < 1 {
            return Err(BalanceError::Config("k_neighbors must be >= 1".into()));
        }
        if !(self.target_ratio > 0.0 && self.target_ratio <= 1.0) {
            return Err(BalanceError::Config(format!(
                "target_ratio must be in (0, 1], got {}",
                self.target_ratio
            )));
        }
        Ok(())
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Indices of the `k` nearest other points for every point; ties broken by index.
pub fn nearest_neighbors(points: &[Vec<f64>], k: usize) -> Vec<Vec<usize>> {
    points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut dists: Vec<(f64, usize)> = points
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(j, q)| (squared_distance(p, q), j))
                .collect();
            let k = k.min(dists.len());
            if k < dists.len() {
                dists.select_nth_unstable_by(k, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                dists.truncate(k);
            }
            dists.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            dists.into_iter().map(|(_, j)| j).collect()
        })
        .collect()
}

/// Generates exactly `needed` synthetic minority vectors.
pub fn smote(
    minority: &[Vec<f64>],
    cfg: &SmoteConfig,
    needed: usize,
) -> Result<Vec<Vec<f64>>, BalanceError> {
    cfg.validate()?;
    if let Some(first) = minority.first() {
        let dim = first.len();
        if let Some((index, v)) = minority.iter().enumerate().find(|(_, v)| v.len() != dim) {
            return Err(BalanceError::Dimension {
                index,
                expected: dim,
                got: v.len(),
            });
        }
    }
    if minority.len() <= cfg.k_neighbors {
        return Err(BalanceError::TooFewMinority {
            k: cfg.k_neighbors,
            count: minority.len(),
        });
    }
    if needed == 0 {
        return Ok(Vec::new());
    }
    let neighbors = nearest_neighbors(minority, cfg.k_neighbors);
    let mut rng = rng_from_seed(cfg.rng_seed);
    Ok((0..needed)
        .map(|_| {
            let i = rng.gen_range(0..minority.len());
            let j = neighbors[i][rng.gen_range(0..cfg.k_neighbors)];
            let lambda: f64 = rng.gen();
            minority[i]
                .iter()
                .zip(&minority[j])
                .map(|(a, b)| a + lambda * (b - a))
                .collect()
        })
        .collect())
}

/// Training set after balancing: originals first, in order, then synthetics.
#[derive(Debug, Clone, PartialEq)]
pub struct Balanced {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<Label>,
    pub synthetic: usize,
}

/// Number of synthetic minority samples needed to reach `target_ratio`.
pub fn synthetic_needed(minority: usize, majority: usize, target_ratio: f64) -> usize {
    let target = (target_ratio * majority as f64).round() as usize;
    target.saturating_sub(minority)
}

/// Oversamples the minority class until minority/majority equals `target_ratio`.
pub fn balance_training_set(
    features: &[Vec<f64>],
    labels: &[Label],
    cfg: &SmoteConfig,
) -> Result<Balanced, BalanceError> {
    cfg.validate()?;
    if features.len() != labels.len() {
        return Err(BalanceError::LengthMismatch {
            features: features.len(),
            labels: labels.len(),
        });
    }
    let coughs = labels.iter().filter(|l| l.is_cough()).count();
    let non_coughs = labels.len() - coughs;
    if coughs == 0 || non_coughs == 0 {
        return Err(BalanceError::SingleClass);
    }
    let (minority_label, minority_count, majority_count) = if coughs <= non_coughs {
        (Label::Cough, coughs, non_coughs)
    } else {
        (Label::NonCough, non_coughs, coughs)
    };
    let needed = synthetic_needed(minority_count, majority_count, cfg.target_ratio);
    let mut out_features = features.to_vec();
    let mut out_labels = labels.to_vec();
    if needed > 0 {
        let minority: Vec<Vec<f64>> = features
            .iter()
            .zip(labels)
            .filter(|(_, l)| **l == minority_label)
            .map(|(f, _)| f.clone())
            .collect();
        let synthetic = smote(&minority, cfg, needed)?;
        out_features.extend(synthetic);
        out_labels.extend(std::iter::repeat_n(minority_label, needed));
    }
    Ok(Balanced {
        features: out_features,
        labels: out_labels,
        synthetic: needed,
    })
}
