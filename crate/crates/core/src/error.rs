use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum LsosError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// A factorization met a non-positive pivot, or CG met direction of
    /// non-positive curvature.
    #[error("operator is not positive definite ({0})")]
    NotPositiveDefinite(String),

    #[error("no convergence: {0}")]
    NonConvergence(String),

    #[error("mini-batch is empty")]
    EmptyBatch,

    #[error("component index {index} out of range for {len} components")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("SAGA table used before initialization")]
    UninitializedTable,

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("config `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("every step-length candidate diverged: {0}")]
    AllCandidatesDiverged(String),

    #[error("traces come from different experiment specs ({0:#x} vs {1:#x})")]
    MismatchedSpecs(u64, u64),

    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = LsosError> = std::result::Result<T, E>;

impl LsosError {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        LsosError::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        LsosError::Io {
            path: path.into(),
            source,
        }
    }
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(LsosError::DimensionMismatch { expected, got })
    }
}
