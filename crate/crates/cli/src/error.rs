use std::process::ExitCode;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    /// Unreadable, malformed or inconsistent configuration or input file.
    #[error("config error: {0}")]
    Config(String),

    /// An engine failed on an otherwise valid configuration.
    #[error("numerical failure: {0}")]
    Numerical(#[from] fbdg_core::Error),

    /// Writing results failed.
    #[error("output error: {0}")]
    Output(String),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    /// 2 for configuration problems, 3 for numerical failures, 1 otherwise.
    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Config(_) => ExitCode::from(2),
            CliError::Numerical(_) => ExitCode::from(3),
            CliError::Output(_) => ExitCode::from(1),
        }
    }
}

/// Maps an engine error raised while building parameters to a config error.
pub(crate) fn invalid(e: fbdg_core::Error) -> CliError {
    CliError::Config(e.to_string())
}
