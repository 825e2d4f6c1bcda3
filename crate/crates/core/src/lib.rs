//! Cough detection from bed-mounted accelerometer magnitudes.
//!
//! The pipeline runs from raw magnitude streams to leave-one-patient-out
//! evaluation:
//!
//! - [`corpus`]: signal and annotation files, events and datasets
//! - [`detect`]: energy-threshold event detection
//! - [`features`]: `(C, Ψ/2 + 5)` feature matrices and standardization
//! - [`balance`]: SMOTE oversampling of the minority class
//! - [`nnet`]: CNN, LSTM and reduced residual classifiers with manual backprop
//! - [`eval`]: ROC/AUC, fold metrics, cross-validation and grid search
//! - [`synth`]: seeded synthetic corpora with exact ground truth

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod balance;
pub mod corpus;
pub mod detect;
pub mod eval;
pub mod features;
pub mod nnet;
pub mod seed;
pub mod synth;
