use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] rwalk::Error),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
}

pub(crate) fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl CliError {
    /// Setup failures caused by bad parameter values count as config errors.
    pub(crate) fn from_setup(e: rwalk::Error) -> Self {
        match e {
            rwalk::Error::InvalidParameter(m) => CliError::Config(m),
            other => CliError::Core(other),
        }
    }

    /// Process exit code: 2 for config errors, 3 for divergence, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(rwalk::Error::Divergence { .. }) => 3,
            _ => 1,
        }
    }
}
