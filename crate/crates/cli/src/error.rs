use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] spttn_core::Error),

    #[error("{path}: line {line}: {message}")]
    Tns {
        path: String,
        line: usize,
        message: String,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("verification failed: max difference {diff:e} exceeds tolerance {tolerance:e}")]
    Verification { diff: f64, tolerance: f64 },
}

impl CliError {
    /// 0 success, 1 usage, 2 verification failure, 3 resource limit.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Verification { .. } => 2,
            CliError::Core(spttn_core::Error::Resource(_)) => 3,
            CliError::Core(spttn_core::Error::BudgetExceeded { .. }) => 3,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
