use std::process::ExitCode;

use paneitz_core::Error as CoreError;
use thiserror::Error;

/// Failures mapped onto the process exit codes.
#[derive(Debug, Error)]
pub enum CliError {
    /// An identity or acceptance check failed (exit 1).
    #[error("check failed: {0}")]
    Check(String),
    /// Configuration could not be parsed or describes an invalid problem (exit 2).
    #[error("configuration error: {0}")]
    Config(String),
    /// The nonlinear solver did not converge (exit 3).
    #[error("solver did not converge: {0}")]
    Solver(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        Self::Config(msg.into())
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            Self::Check(_) => 1,
            Self::Config(_) | Self::Io(_) => 2,
            Self::Solver(_) => 3,
        })
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Stagnation { .. }
            | CoreError::Bracket(_)
            | CoreError::ZeroDirection
            | CoreError::ZeroMultiplier
            | CoreError::Eigen(_) => Self::Solver(e.to_string()),
            _ => Self::Config(e.to_string()),
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Self::Io(std::io::Error::other(e))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::Io(std::io::Error::other(e))
    }
}
