use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("line {line}: `{key}`: {message}")]
    Config {
        line: usize,
        key: String,
        message: String,
    },

    #[error("invalid experiment: {0}")]
    Validation(String),

    #[error(transparent)]
    Core(#[from] tvcs::Error),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {reason}", path.display())]
    Trace { path: PathBuf, reason: String },
}

impl CliError {
    /// Process exit status: 1 for bad input, 2 for failures while computing
    /// or writing results.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config { .. } | CliError::Validation(_) | CliError::Trace { .. } => 1,
            CliError::Core(e) => match e {
                tvcs::Error::InvalidArgument(_)
                | tvcs::Error::DimensionMismatch(_)
                | tvcs::Error::AssumptionViolated(_)
                | tvcs::Error::ImageFormat { .. } => 1,
                tvcs::Error::Divergence { .. } | tvcs::Error::Numerical(_) | tvcs::Error::Io { .. } => 2,
            },
            CliError::Io { .. } => 2,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}
