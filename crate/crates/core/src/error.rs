use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, WbcpError>;

#[derive(Debug, Error)]
pub enum WbcpError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("weights are degenerate: {0}")]
    WeightDegeneracy(String),

    #[error("calibration record {id} has no location; geographic methods need coordinates")]
    MissingLocations { id: u64 },

    #[error("upper bound {bound} is below the largest loss {max_loss}")]
    BoundViolation { bound: f64, max_loss: f64 },

    #[error(
        "{size}x{size} covariance matrix is not positive definite even with jitter {jitter:e}"
    )]
    FactorizationFailure { size: usize, jitter: f64 },

    #[error("field is constant; statistic is undefined")]
    ConstantField,

    #[error("{path}:{line}: {message}")]
    SchemaError {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("{path}:{line}: non-finite value in column `{column}`")]
    NonFiniteValue {
        path: PathBuf,
        line: u64,
        column: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl WbcpError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        WbcpError::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by the caller's data or configuration rather
    /// than by a failure inside the library.
    pub fn is_input_error(&self) -> bool {
        !matches!(
            self,
            WbcpError::FactorizationFailure { .. } | WbcpError::Io { .. }
        )
    }
}
