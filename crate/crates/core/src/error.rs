use std::fmt;

/// Errors produced by every fallible operation in this crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A precondition on the arguments was violated.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A numerical routine could not proceed (singular system, vanishing denominator).
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Malformed textual input. `line` is 1-based.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// The observation oracle could not answer a lookup.
    #[error("oracle failure: {0}")]
    Oracle(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn arg(msg: impl fmt::Display) -> Self {
        Error::InvalidArgument(msg.to_string())
    }

    pub(crate) fn numerical(msg: impl fmt::Display) -> Self {
        Error::Numerical(msg.to_string())
    }

    pub(crate) fn parse(line: usize, msg: impl fmt::Display) -> Self {
        Error::Parse { line, msg: msg.to_string() }
    }

    /// Stable machine-readable code, used by the command-line front end.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "E_ARG",
            Error::Numerical(_) => "E_NUMERIC",
            Error::Parse { .. } => "E_PARSE",
            Error::Oracle(_) => "E_ORACLE",
            Error::Io(_) => "E_IO",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
