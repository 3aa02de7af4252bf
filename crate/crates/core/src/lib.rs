//! Levenberg-Marquardt training for small multilayer perceptrons, with a
//! CSV-to-report pipeline for binary classification of clinical records.
//!
//! The optimizer in [`lm`] is generic over any [`lm::ResidualProvider`];
//! [`mlp::MlpProblem`] is the network instance used by the pipeline.

// `!(x > y)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod dataset;
pub mod linalg;
pub mod lm;
pub mod metrics;
pub mod mlp;
pub mod pipeline;
pub mod saved_model;

pub use config::RunConfig;
pub use dataset::{Dataset, NormStats, Schema, SplitSpec};
pub use linalg::{DenseMatrix, DenseVector, LinalgError};
pub use lm::{
    lm_train, DampingMode, LmConfig, LmError, ResidualProvider, Termination, TrainHistory,
};
pub use metrics::{ConfusionMatrix, EvalReport};
pub use mlp::{InitSpec, MlpModel, MlpProblem, MlpShape};
pub use saved_model::SavedModel;
