//! Self-describing JSON model checkpoints.
//!
//! Layout:
//!
//! ```text
//! {
//!   "format": "coughsense-model",
//!   "version": 1,
//!   "architecture": { "kind": "cnn", ... },
//!   "input_shape": [rows, cols],
//!   "feature_config": { "frame_len": 32, "segments": 10, "log_epsilon": 1e-10 },
//!   "standardizer": { "mean": [...], "std": [...] },
//!   "train_config": { ... },
//!   "init_seed": 7,
//!   "param_count": N,
//!   "params": [ ...N values in layer order... ]
//! }
//! ```
//!
//! Parameters are written with shortest round-trip formatting and parsed with
//! correct rounding, so a reload reproduces every value bit for bit.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{Architecture, Model};
use super::train::TrainConfig;
use super::NnetError;
use crate::features::{FeatureConfig, Standardizer};

pub const CHECKPOINT_FORMAT: &str = "coughsense-model";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub architecture: Architecture,
    pub input_shape: (usize, usize),
    pub feature_config: FeatureConfig,
    pub standardizer: Standardizer,
    pub train_config: TrainConfig,
    pub init_seed: u64,
    pub param_count: usize,
    pub params: Vec<f64>,
}

impl Checkpoint {
    pub fn new(
        model: &Model,
        feature_config: FeatureConfig,
        standardizer: Standardizer,
        train_config: TrainConfig,
        init_seed: u64,
    ) -> Self {
        let params = model.flat_params();
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            architecture: model.architecture.clone(),
            input_shape: model.input_shape,
            feature_config,
            standardizer,
            train_config,
            init_seed,
            param_count: params.len(),
            params,
        }
    }

    pub fn model(&self) -> Result<Model, NnetError> {
        let mut model = Model::build(self.architecture.clone(), self.input_shape, self.init_seed)?;
        model.set_flat_params(&self.params)?;
        Ok(model)
    }

    pub fn to_json(&self) -> Result<String, NnetError> {
        serde_json::to_string_pretty(self).map_err(|e| NnetError::Checkpoint(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, NnetError> {
        let ckpt: Checkpoint =
            serde_json::from_str(text).map_err(|e| NnetError::Checkpoint(e.to_string()))?;
        if ckpt.format != CHECKPOINT_FORMAT {
            return Err(NnetError::Checkpoint(format!("unknown format {:?}", ckpt.format)));
        }
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(NnetError::Checkpoint(format!(
                "unsupported version {}",
                ckpt.version
            )));
        }
        if ckpt.params.len() != ckpt.param_count {
            return Err(NnetError::Checkpoint(format!(
                "header declares {} parameters, found {}",
                ckpt.param_count,
                ckpt.params.len()
            )));
        }
        Ok(ckpt)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), NnetError> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?)
            .map_err(|e| NnetError::Checkpoint(format!("{}: {e}", path.display())))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, NnetError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| NnetError::Checkpoint(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}
