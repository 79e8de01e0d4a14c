use thiserror::Error;

use ssg_server::ConfigError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    /// Unreadable or malformed input data.
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Numeric(String),
    /// Artifacts were written but the solver did not converge.
    #[error("{0}")]
    Degraded(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Self::Io {
            context: context.into(),
            source,
        }
    }

    /// 2 for usage, config and input errors; 1 for everything else.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Config(_) | CliError::Input(_) => 2,
            _ => 1,
        }
    }
}
