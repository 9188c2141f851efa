use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the simulator pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("config error: {0}")]
    Config(String),

    #[error("quadrature did not converge after {panels} panels (last change {last_delta:e})")]
    Quadrature { panels: usize, last_delta: f64 },

    #[error("symmetric eigensolver did not converge after {sweeps} sweeps (off-diagonal norm {off_norm:e})")]
    Eigensolver { sweeps: usize, off_norm: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("monitor abort at t = {t}: {reason}")]
    Monitor { t: f64, reason: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed record {path}: {reason}")]
    Record { path: PathBuf, reason: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the CLI: 1 config, 2 monitor abort, 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Io { .. } | Error::Record { .. } => 1,
            Error::Monitor { .. } => 2,
            Error::Quadrature { .. } | Error::Eigensolver { .. } | Error::Numerical(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
