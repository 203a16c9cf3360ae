use std::path::PathBuf;

/// Errors raised anywhere in the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid slip system: {0}")]
    InvalidSlipSystem(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid load program: {0}")]
    InvalidLoad(String),

    #[error("step {step}: no convergence after {iterations} iterations (KKT residual {residual:.3e}, energy decrease {energy_decrease:.3e})")]
    NonConvergence {
        step: usize,
        iterations: usize,
        residual: f64,
        energy_decrease: f64,
    },

    #[error("conjugate gradients stalled after {iterations} iterations: relative residual {relative_residual:.3e}, condition estimate {condition_estimate:.3e}")]
    CgStall {
        iterations: usize,
        relative_residual: f64,
        condition_estimate: f64,
    },

    #[error("load history is not monotone at entry {index}")]
    NonMonotoneLoad { index: usize },

    #[error("no sign pattern satisfies the optimality conditions")]
    NoConsistentPattern,

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{0}")]
    Validation(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
