//! Imbalance-aware multilayer-perceptron classifier for network intrusion
//! detection, with the data pipeline, losses, optimizer and metrics it needs.

// Negated float comparisons (`!(x > 0.0)`) are used on purpose so NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod error;
pub mod loss;
pub mod math;
pub mod metrics;
pub mod model;
pub mod optimizer;
pub mod trainer;

pub use error::{Error, Result};
pub use loss::{LossKind, LossSpec};
pub use math::{Matrix, RngState};
pub use metrics::ClassReport;
pub use model::MlpModel;
pub use trainer::{evaluate, train, Strategy, TrainConfig, TrainHistory};
