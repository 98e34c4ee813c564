use thiserror::Error;

use crate::harness::MetricsTrace;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    /// A non-finite coordinate appeared; the trace covers every record emitted before it.
    #[error("run diverged after {} records", .0.records.len())]
    Diverged(Box<MetricsTrace>),

    #[error("internal consistency violation: {0}")]
    Internal(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
