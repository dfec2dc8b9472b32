use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),

    /// The input is well formed but violates a model invariant.
    #[error("validation error: {0}")]
    Validation(String),

    #[error("profile error: {0}")]
    Profile(String),

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("metric undefined: {0}")]
    Metric(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("power flow diverged: {0}")]
    Divergence(String),

    #[error("search space of {size} candidates exceeds cap {cap}; lower the switching budget or the number of reconfigurable users")]
    CapExceeded { size: u128, cap: u128 },

    #[error("infeasible program; irreducible row subset: {}", rows.join(", "))]
    Infeasible { rows: Vec<String> },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
