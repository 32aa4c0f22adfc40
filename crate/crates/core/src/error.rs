use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{what} id {index} out of range (must be < {bound})")]
    OutOfRange {
        what: &'static str,
        index: usize,
        bound: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("dataset is empty: {0}")]
    EmptyDataset(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("{malformed} of {total} lines malformed (limit is 1%); first error at line {first_line}: {first_message}")]
    TooManyMalformed {
        malformed: u64,
        total: u64,
        first_line: u64,
        first_message: String,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("bad container: {0}")]
    Format(String),

    #[error("checksum mismatch, file is corrupt or truncated; re-run `prep --force` to rebuild it")]
    Checksum,

    #[error("cache was built with a different preprocessing config (cache {found}, expected {expected}); re-run `prep --force`")]
    ConfigMismatch { found: String, expected: String },

    #[error("only {eligible} users have at least 2 interactions, {requested} evaluation users requested")]
    InsufficientUsers { eligible: usize, requested: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

pub(crate) fn check_index(what: &'static str, index: usize, bound: usize) -> Result<()> {
    if index < bound {
        Ok(())
    } else {
        Err(Error::OutOfRange { what, index, bound })
    }
}
