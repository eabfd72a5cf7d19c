//! Regression learners: CART, bagged forests, boosted trees and an MLP.

mod dataset;
pub mod forest;
pub mod gbt;
pub mod mlp;
mod model;
pub mod tree;

use thiserror::Error;

pub use dataset::{RowMeta, Source, TrainingSet};
pub use forest::{fit_forest, Forest, ForestParams};
pub use gbt::{fit_gbt, Gbt, GbtParams};
pub use mlp::{fit_mlp, Activation, Mlp, MlpParams};
pub use model::{
    fit_position_model, predict_position, AxisModel, ModelKind, ModelSpec, PositionModel, MODEL_FORMAT_VERSION,
};
pub use tree::{fit_tree, Node, Tree, TreeParams};

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("row count mismatch: {features} feature rows, {targets} target rows, {meta} meta rows (targets need 3 columns)")]
    ShapeMismatch { features: usize, targets: usize, meta: usize },
    #[error("non-finite value in row {row}")]
    NonFinite { row: usize },
    #[error("need at least {needed} rows, got {got}")]
    TooFewRows { needed: usize, got: usize },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("unsupported model format version {0}")]
    UnsupportedVersion(u32),
    #[error("expected 3 axis models, found {0}")]
    AxisCount(usize),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
