//! From-scratch neural network kernel and the cough classifiers.

pub mod checkpoint;
pub mod layers;
pub mod lstm;
pub mod model;
pub mod tensor;
pub mod train;

use thiserror::Error;

pub use checkpoint::Checkpoint;
pub use layers::{Conv2d, Dense, Layer, Param, ResidualBlock};
pub use lstm::{Lstm, LstmActivation};
pub use model::{Architecture, ClassifierKind, CnnSpec, LstmSpec, MiniResnetSpec, Model};
pub use tensor::Tensor;
pub use train::{predict_proba, train, Optimizer, TrainConfig, TrainReport};

#[derive(Debug, Error, PartialEq)]
pub enum NnetError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("empty training set")]
    EmptyTrainSet,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}
