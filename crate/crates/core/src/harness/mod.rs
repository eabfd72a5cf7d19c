//! Experiment protocol: sweeps, captures, splits, metrics and studies.

pub mod capture;
pub mod config;
pub mod io;
pub mod metrics;
pub mod split;
pub mod studies;
pub mod sweep;

use thiserror::Error;

pub use capture::{generate_capture_set, plan_captures, render_capture, render_plans, CapturePlan, CaptureSpec, CaptureStats};
pub use config::{ExperimentConfig, Study};
pub use io::{grid_svg, read_features_csv, write_cdf_csv, write_features_csv, write_grid_csv};
pub use metrics::{empirical_cdf, error_3d, evaluate, percentile, CdfPoint, EvalReport, GridCell};
pub use split::split;
pub use studies::{run_experiment, write_outputs, StudyOutput};
pub use sweep::{generate_sweep, Dataset, DatasetRow, GridSpec, SweepSpec};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config key `{key}`: {message}")]
    Config { key: String, message: String },
    #[error("location ({grid_i}, {grid_j}) at {height_m} m has {have} rows, {need} needed for the test split")]
    InsufficientRows { grid_i: usize, grid_j: usize, height_m: f64, have: usize, need: usize },
    #[error("test set is empty")]
    EmptyTestSet,
    #[error(transparent)]
    Learn(#[from] crate::learn::LearnError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl HarnessError {
    pub fn config(key: &str, message: impl Into<String>) -> Self {
        HarnessError::Config { key: key.to_owned(), message: message.into() }
    }
}
