//! Mini-batch training and batched inference.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::model::Model;
use super::tensor::Tensor;
use super::NnetError;
use crate::features::FeatureMatrix;
use crate::seed::{derive_seed, rng_from_seed};

pub const BATCH_SIZES: [usize; 3] = [64, 128, 256];

/// Epoch counts of the grid: 10 to 190 in steps of 20.
pub fn epoch_grid() -> Vec<usize> {
    (10..200).step_by(20).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    /// Plain mini-batch gradient descent.
    #[default]
    Sgd,
    /// Adam with β1 = 0.9, β2 = 0.999, ε = 1e-8.
    Adam,
}

impl std::str::FromStr for Optimizer {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "sgd" => Ok(Optimizer::Sgd),
            "adam" => Ok(Optimizer::Adam),
            other => Err(format!("unknown optimizer {other:?} (expected sgd|adam)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    /// Overrides the architecture's default learning rate when set.
    pub learning_rate: Option<f64>,
    pub rng_seed: u64,
    #[serde(default)]
    pub optimizer: Optimizer,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 64,
            epochs: 10,
            learning_rate: None,
            rng_seed: 0,
            optimizer: Optimizer::Sgd,
        }
    }
}

impl TrainConfig {
    /// Checks the batch-size and epoch values of the experiment grid.
    pub fn validate(&self) -> Result<(), NnetError> {
        if !BATCH_SIZES.contains(&self.batch_size) {
            return Err(NnetError::Config(format!(
                "batch_size {} is outside {BATCH_SIZES:?}",
                self.batch_size
            )));
        }
        if !epoch_grid().contains(&self.epochs) {
            return Err(NnetError::Config(format!(
                "epochs {} is outside 10..=190 step 20",
                self.epochs
            )));
        }
        if let Some(lr) = self.learning_rate {
            if !(lr >= 0.0 && lr.is_finite()) {
                return Err(NnetError::Config(format!("learning rate {lr} must be >= 0")));
            }
        }
        Ok(())
    }
}

/// Per-epoch mean training loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub loss_curve: Vec<f64>,
    pub learning_rate: f64,
}

/// Stacks feature matrices into a `(B, rows, cols)` tensor.
pub fn batch_tensor<'a>(matrices: impl IntoIterator<Item = &'a FeatureMatrix>) -> Result<Tensor, NnetError> {
    let mut data = Vec::new();
    let mut shape: Option<(usize, usize)> = None;
    let mut count = 0;
    for m in matrices {
        match shape {
            None => shape = Some(m.shape()),
            Some(s) if s != m.shape() => {
                return Err(NnetError::Shape(format!(
                    "mixed matrix shapes {s:?} and {:?}",
                    m.shape()
                )))
            }
            _ => {}
        }
        data.extend_from_slice(&m.values);
        count += 1;
    }
    let (rows, cols) = shape.unwrap_or((0, 0));
    Tensor::new(vec![count, rows, cols], data)
}

struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: i32,
}

/// Trains `model` in place on `(features, labels)`. Shuffling and dropout
/// masks are drawn from streams derived from `cfg.rng_seed`.
pub fn train(
    model: &mut Model,
    features: &[FeatureMatrix],
    labels: &[usize],
    cfg: &TrainConfig,
) -> Result<TrainReport, NnetError> {
    if features.is_empty() {
        return Err(NnetError::EmptyTrainSet);
    }
    if features.len() != labels.len() {
        return Err(NnetError::Shape(format!(
            "{} feature matrices but {} labels",
            features.len(),
            labels.len()
        )));
    }
    if cfg.batch_size == 0 {
        return Err(NnetError::Config("batch_size must be >= 1".into()));
    }
    let lr = cfg
        .learning_rate
        .unwrap_or_else(|| model.architecture.default_learning_rate());
    let mut shuffle_rng = rng_from_seed(derive_seed(cfg.rng_seed, &[1]));
    let mut dropout_rng = rng_from_seed(derive_seed(cfg.rng_seed, &[2]));
    let mut order: Vec<usize> = (0..features.len()).collect();
    let mut adam = match cfg.optimizer {
        Optimizer::Adam => Some(AdamState {
            m: model.params().iter().map(|p| vec![0.0; p.len()]).collect(),
            v: model.params().iter().map(|p| vec![0.0; p.len()]).collect(),
            step: 0,
        }),
        Optimizer::Sgd => None,
    };
    let mut loss_curve = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let x = batch_tensor(chunk.iter().map(|&i| &features[i]))?;
            let y: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let loss = model.compute_gradients(&x, &y, 1.0, Some(&mut dropout_rng))?;
            total += loss * chunk.len() as f64;
            match adam.as_mut() {
                None => {
                    for p in model.params_mut() {
                        for (w, g) in p.value.iter_mut().zip(&p.grad) {
                            *w -= lr * g;
                        }
                    }
                }
                Some(state) => {
                    let (b1, b2, eps) = (0.9, 0.999, 1e-8);
                    state.step += 1;
                    let c1 = 1.0 - f64::powi(b1, state.step);
                    let c2 = 1.0 - f64::powi(b2, state.step);
                    for ((p, m), v) in model.params_mut().into_iter().zip(&mut state.m).zip(&mut state.v) {
                        for i in 0..p.value.len() {
                            let g = p.grad[i];
                            m[i] = b1 * m[i] + (1.0 - b1) * g;
                            v[i] = b2 * v[i] + (1.0 - b2) * g * g;
                            p.value[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
                        }
                    }
                }
            }
        }
        loss_curve.push(total / features.len() as f64);
    }
    Ok(TrainReport {
        loss_curve,
        learning_rate: lr,
    })
}

const INFERENCE_BATCH: usize = 256;

/// Cough probability per matrix, in inference mode.
pub fn predict_proba(model: &Model, features: &[FeatureMatrix]) -> Result<Vec<f64>, NnetError> {
    let mut out = Vec::with_capacity(features.len());
    for chunk in features.chunks(INFERENCE_BATCH) {
        let probs = model.forward(&batch_tensor(chunk)?)?;
        out.extend(probs.data().chunks_exact(2).map(|p| p[1]));
    }
    Ok(out)
}
