use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("stiffness {value} N/m outside [{min}, {max}]")]
    StiffnessOutOfRange { value: f64, min: f64, max: f64 },

    #[error("stiffness matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("simulation diverged at tick {tick}: {what}")]
    Diverged { tick: u64, what: &'static str },

    #[error("invalid maze: {0}")]
    InvalidMaze(String),

    #[error("bad weight file: {0}")]
    WeightFormat(String),

    #[error("bad dataset file: {0}")]
    DatasetFormat(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("non-finite loss in {0}")]
    NonFiniteLoss(&'static str),

    #[error("replay mismatch at line {line}: {detail}")]
    ReplayMismatch { line: usize, detail: String },

    #[error("{0}")]
    Compare(String),

    #[error("refusing to overwrite {0}")]
    WouldOverwrite(PathBuf),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// Short machine-readable tag for the error class.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::NonFinite(_) => "non_finite",
            Error::StiffnessOutOfRange { .. } => "stiffness_range",
            Error::NotPositiveDefinite => "not_positive_definite",
            Error::InvalidParameter { .. } => "invalid_parameter",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::Diverged { .. } => "diverged",
            Error::InvalidMaze(_) => "invalid_maze",
            Error::WeightFormat(_) => "weight_format",
            Error::DatasetFormat(_) => "dataset_format",
            Error::Config(_) => "config",
            Error::NonFiniteLoss(_) => "non_finite_loss",
            Error::ReplayMismatch { .. } => "replay_mismatch",
            Error::Compare(_) => "compare",
            Error::WouldOverwrite(_) => "would_overwrite",
            Error::Io { .. } => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }
}
