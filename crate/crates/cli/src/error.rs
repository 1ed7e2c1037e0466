use std::path::PathBuf;

use thiserror::Error;

use crate::abm::AbmError;
use crate::plot::PlotError;

/// Failures of a harness run, each mapped to a process exit code.
#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}:{line}:{column}: {message}")]
    Parse { path: PathBuf, line: usize, column: usize, message: String },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{0}")]
    Infeasible(String),
    #[error(transparent)]
    Solver(socialtrust_core::Error),
    #[error(transparent)]
    Abm(#[from] AbmError),
    #[error(transparent)]
    Plot(#[from] PlotError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Other(#[from] anyhow::Error),
}

impl HarnessError {
    /// 1 for configuration and infeasibility problems, 2 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Solver(e)
                if !matches!(
                    e,
                    socialtrust_core::Error::Config(_) | socialtrust_core::Error::LengthMismatch { .. }
                ) =>
            {
                2
            }
            HarnessError::Other(_) => 2,
            _ => 1,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.into(), source }
    }
}

impl From<socialtrust_core::Error> for HarnessError {
    fn from(e: socialtrust_core::Error) -> Self {
        match e {
            socialtrust_core::Error::InfeasibleTarget { .. } => HarnessError::Infeasible(e.to_string()),
            e => HarnessError::Solver(e),
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
