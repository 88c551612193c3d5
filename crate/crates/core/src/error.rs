//! Error type shared by all modules.

use alloc::string::String;

/// Failure categories. The CLI maps these onto exit codes.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// Precondition violated by the caller.
    #[error("invalid input: {0}")]
    InvalidInput(String),
    /// A solver did not reach its target.
    #[error("numerical failure: {0}")]
    Numerical(String),
    /// Data that should satisfy a compatibility condition does not.
    #[error("inconsistent data: {0}")]
    Inconsistent(String),
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}

pub(crate) fn numerical(msg: impl Into<String>) -> Error {
    Error::Numerical(msg.into())
}

pub(crate) fn inconsistent(msg: impl Into<String>) -> Error {
    Error::Inconsistent(msg.into())
}
