use std::fmt;
use std::io;

/// Errors produced by the risk engine.
#[derive(Debug)]
pub enum Error {
    /// An argument violated a documented precondition.
    InvalidInput(String),
    /// A data file row could not be parsed.
    Parse { line: u64, message: String },
    /// A data file violated the expected schema.
    Schema(String),
    /// Sample size outside the supported range of a statistical routine.
    UnsupportedSize { n: usize, min: usize, max: usize },
    Io(io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidInput(msg) => write!(f, "invalid input: {msg}"),
            Error::Parse { line, message } => write!(f, "parse error at line {line}: {message}"),
            Error::Schema(msg) => write!(f, "schema error: {msg}"),
            Error::UnsupportedSize { n, min, max } => {
                write!(f, "sample size {n} outside supported range [{min}, {max}]")
            }
            Error::Io(err) => write!(f, "io error: {err}"),
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

impl From<io::Error> for Error {
    fn from(err: io::Error) -> Self {
        Error::Io(err)
    }
}

pub(crate) fn invalid_input(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
