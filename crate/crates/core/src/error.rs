use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("validation error: {0}")]
    Validation(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("{what} did not converge after {iters} iterations (last residual {residual:e})")]
    NonConvergence {
        what: &'static str,
        iters: usize,
        residual: f64,
    },

    #[error("{what} diverged at iteration {iter}: {detail}")]
    Divergence {
        what: &'static str,
        iter: usize,
        detail: String,
    },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("censoring calibration failed: target {target}, reached {reached}")]
    Calibration { target: f64, reached: f64 },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 1 solver failure, 2 usage/validation, 3 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NonConvergence { .. } | Error::Divergence { .. } | Error::Degenerate(_) => 1,
            Error::Calibration { .. } => 1,
            Error::Validation(_) | Error::Schema(_) | Error::Usage(_) => 2,
            Error::Io { .. } | Error::Csv(_) => 3,
        }
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::Validation(msg.into())
}
