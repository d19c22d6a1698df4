use std::path::PathBuf;

use crate::runtime::JobError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("point {id}: coordinate {value} on axis {axis} is outside the target space [0, 1]")]
    OutOfSpace { id: u64, axis: usize, value: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("point {point_id}: cannot find {k} neighbors, training set holds only {available} points")]
    UnsatisfiableK {
        point_id: u64,
        k: usize,
        available: u64,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("oracle refused: |I|*|T| = {pairs} exceeds the quadratic scan guard of {limit}")]
    OracleGuard { pairs: u128, limit: u128 },

    #[error(transparent)]
    Job(#[from] JobError),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
