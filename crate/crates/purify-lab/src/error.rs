use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Caller broke a precondition: bad dimensions, invalid index set, malformed input.
    #[error("invalid usage: {0}")]
    Usage(String),
    /// Input is outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// Requested problem size exceeds the configured dense-matrix budget.
    #[error("size budget exceeded: {0}")]
    Budget(String),
    /// A state or report file failed to parse.
    #[error("bad file format: {0}")]
    Format(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
