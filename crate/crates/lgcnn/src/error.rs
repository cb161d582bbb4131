use std::path::Path;

use lgcnn_core::Error as CoreError;

/// Failures surfaced by the command line, split by exit code.
#[derive(Debug, thiserror::Error)]
pub enum AppError {
    /// An explicit expectation did not hold (exit code 1).
    #[error("{0}")]
    Expectation(String),
    /// Bad input, unreadable or corrupt files, invalid configuration (exit
    /// code 2).
    #[error("{0}")]
    Input(String),
}

pub type AppResult<T> = Result<T, AppError>;

impl AppError {
    pub fn exit_code(&self) -> u8 {
        match self {
            AppError::Expectation(_) => 1,
            AppError::Input(_) => 2,
        }
    }

    pub fn io(path: &Path, err: std::io::Error) -> Self {
        AppError::Input(format!("{}: {err}", path.display()))
    }

    pub fn input(msg: impl Into<String>) -> Self {
        AppError::Input(msg.into())
    }
}

impl From<CoreError> for AppError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Diverged { .. } => AppError::Expectation(e.to_string()),
            other => AppError::Input(other.to_string()),
        }
    }
}
