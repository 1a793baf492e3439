use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("invalid schema: {0}")]
    Schema(String),

    #[error("unknown column `{0}` in dataset header")]
    UnknownColumn(String),

    #[error("missing column `{0}` in dataset header")]
    MissingColumn(String),

    #[error("row {row}, column `{column}`: cannot parse `{value}`: {reason}")]
    Cell {
        row: usize,
        column: String,
        value: String,
        reason: String,
    },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("dataset must contain both label classes (positives: {positives}, negatives: {negatives})")]
    SingleClass { positives: usize, negatives: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("schema mismatch: model expects fingerprint {expected}, data has {found}")]
    SchemaMismatch { expected: String, found: String },

    #[error(
        "fold {fold} of {folds} has a single class in its validation split \
         (class counts: {negatives} negative, {positives} positive); \
         use at most {max_folds} folds or merge rare classes"
    )]
    DegenerateFold {
        fold: usize,
        folds: usize,
        negatives: usize,
        positives: usize,
        max_folds: usize,
    },

    #[error("hyperparameter grid is empty or invalid: {0}")]
    InvalidGrid(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("feature `{0}` not found")]
    UnknownFeature(String),

    #[error("feature `{0}` has no non-missing values")]
    FeatureAllMissing(String),

    #[error("feature `{feature}` is not eligible: {reason}")]
    IneligibleFeature { feature: String, reason: String },

    #[error("not enough candidates: {0}")]
    NotEnoughCandidates(String),

    #[error("infeasible experiment design: {0}")]
    InfeasibleDesign(String),

    #[error("perfect or quasi-complete separation detected: {0}")]
    Separation(String),

    #[error("IRLS did not converge after {iterations} iterations (last log-likelihood change {last_change:e})")]
    NonConvergence { iterations: usize, last_change: f64 },

    #[error("response rejected: {0}")]
    Response(#[from] crate::experiment::store::ResponseError),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
