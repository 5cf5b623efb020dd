use std::path::PathBuf;

use nonlocal_core::OmegaError;
use thiserror::Error;

use crate::config::ConfigError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("numerical failure: {message}{}", diagnostic_note(.diagnostic))]
    Numerical {
        message: String,
        diagnostic: Option<PathBuf>,
    },
    #[error("predictor failed: {0}")]
    Predictor(OmegaError),
    #[error("{0} check(s) failed")]
    CheckFailed(usize),
    #[error("all {0} sweep runs failed")]
    AllRunsFailed(usize),
}

fn diagnostic_note(path: &Option<PathBuf>) -> String {
    match path {
        Some(p) => format!(" (diagnostics in {})", p.display()),
        None => String::new(),
    }
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn numerical(message: impl ToString) -> Self {
        CliError::Numerical {
            message: message.to_string(),
            diagnostic: None,
        }
    }

    /// Process exit status.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::CheckFailed(_) => 1,
            CliError::Config(_) | CliError::Usage(_) | CliError::Io { .. } => 2,
            CliError::Numerical { .. } | CliError::AllRunsFailed(_) => 3,
            CliError::Predictor(e) => match e {
                OmegaError::NoRoot { .. } | OmegaError::InfeasibleMeasure { .. } => 4,
                OmegaError::Precondition(_) | OmegaError::HypothesisMismatch(..) => 2,
                _ => 3,
            },
        }
    }
}
