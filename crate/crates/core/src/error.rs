//! Crate-wide error type.

use std::fmt;

/// Errors produced by map construction operations.
#[derive(Debug)]
pub enum Error {
    /// A precondition on an argument was violated.
    InvalidArgument(String),
    /// Reading or writing a file failed.
    Io(std::io::Error),
    /// A file had the right shape but unparseable content. The line number is
    /// 1-based and includes the header row.
    Parse { line: usize, message: String },
    /// Training diverged or produced a non-finite quantity.
    Training(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::Io(err) => write!(f, "i/o error: {err}"),
            Error::Parse { line, message } => write!(f, "parse error at line {line}: {message}"),
            Error::Training(msg) => write!(f, "training error: {msg}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(err) => Some(err),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err)
    }
}

pub type Result<T> = std::result::Result<T, Error>;

/// Shorthand for [`Error::InvalidArgument`].
pub fn invalid_argument(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
