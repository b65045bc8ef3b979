use thiserror::Error;

use crate::metrics::MetricRecord;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("index {index} out of range for {len} items")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("operation not supported for {0}")]
    Unsupported(String),

    #[error("estimator state: {0}")]
    EstimatorState(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("particle system diverged at step {step}: position norm {norm:e}")]
    Diverged {
        step: u64,
        norm: f64,
        /// Records collected before the divergence was detected.
        records: Box<Vec<MetricRecord>>,
    },

    #[error("{path}: line {line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn ensure_finite(values: &[f64], what: &'static str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}
