use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the mathematical domain of a function or distribution.
    #[error("domain error: {0}")]
    Domain(String),
    /// Vector or layer dimensions do not agree.
    #[error("shape mismatch: {0}")]
    Shape(String),
    /// The caller violated an operation precondition (empty batch, length mismatch, ...).
    #[error("usage error: {0}")]
    Usage(String),
    /// A computation produced a non-finite value.
    #[error("numeric failure: {0}")]
    Numeric(String),
    /// A configuration document is malformed or inconsistent.
    #[error("config error: {0}")]
    Config(String),
    /// An input data file is malformed.
    #[error("data error: {0}")]
    Data(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }
}
