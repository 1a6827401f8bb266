//! Model specifications, design matrices, boosted-tree training, metrics
//! and specification alerts.

use alloc::string::String;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::EvalError;
use crate::query::ParseError;

mod gbdt;
mod matrix;
pub mod metrics;
mod spec;
mod train;

pub use gbdt::{Node, Tree, MAX_BINS};
pub use matrix::{build_design_matrix, DesignMatrix, FeatureInfo, RowCounts};
pub use metrics::auroc;
pub use spec::{Grid, InputVariable, LearnerParams, ModelSpec, ParsedSpec};
pub use train::{
    detect_rare_classes, detect_trivial_approximation, train_model, Alert, Ensemble, GridResult, Importance, Metrics,
    MetricsBundle, RareClass, TrainedModel, MIN_TRAIN_ROWS, RARE_RECALL, TOP_K, TRIVIAL_RATIO,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Binary,
    Multiclass,
    Regression,
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum ModelError {
    #[error("{what}: {error}")]
    Parse { what: String, error: ParseError },
    #[error("{what}: {error}")]
    Eval { what: String, error: EvalError },
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error("`{variable}` evaluates to {kind} rows; model variables must be aggregated to the timesteps")]
    NotTimeSeries { variable: String, kind: String },
    #[error("{0}")]
    NoRows(String),
    #[error("the target is missing at every timestep")]
    TargetAllMissing,
    #[error("{found} training rows; at least {needed} are needed")]
    TooFewRows { found: usize, needed: usize },
    #[error("the target has a single class in the training split")]
    SingleClass,
}

impl ModelError {
    pub fn code(&self) -> &'static str {
        match self {
            ModelError::Parse { .. } => "parse_error",
            ModelError::Eval { error, .. } => error.code(),
            ModelError::InvalidSpec(_) => "invalid_spec",
            ModelError::NotTimeSeries { .. } => "not_time_series",
            ModelError::NoRows(_) => "no_rows",
            ModelError::TargetAllMissing => "target_all_missing",
            ModelError::TooFewRows { .. } => "too_few_rows",
            ModelError::SingleClass => "single_class",
        }
    }
}
