use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Broad failure class, used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Data,
    Numeric,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("time grid is degenerate: {0}")]
    GridDegenerate(String),

    #[error("Nelson-Aalen estimator undefined: {0}")]
    EstimatorUndefined(String),

    #[error("metric undefined: {0}")]
    MetricUndefined(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("training diverged at epoch {epoch} (loss {loss})")]
    TrainingDiverged {
        epoch: usize,
        loss: f64,
        trace: Vec<f64>,
    },

    #[error("censoring calibration failed: achieved rate {achieved:.4}, target {target:.4}")]
    Calibration { achieved: f64, target: f64 },

    #[error("data error: {0}")]
    Data(String),

    #[error("schema error at line {line}: {message}")]
    Schema { line: usize, message: String },

    #[error("malformed {what}: {message}")]
    Format { what: &'static str, message: String },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Numeric(_)
            | Error::TrainingDiverged { .. }
            | Error::Calibration { .. }
            | Error::MetricUndefined(_)
            | Error::EstimatorUndefined(_) => ErrorClass::Numeric,
            _ => ErrorClass::Data,
        }
    }

    pub(crate) fn format(what: &'static str, message: impl Into<String>) -> Self {
        Error::Format {
            what,
            message: message.into(),
        }
    }
}
