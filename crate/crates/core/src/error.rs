use std::io;

/// Errors raised by every fallible operation in the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("malformed input: {0}")]
    Format(String),
    #[error("invalid data: {0}")]
    Data(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("argument outside domain: {0}")]
    Domain(String),
    #[error("index {index} out of range for {len} samples")]
    Index { index: usize, len: usize },
    #[error("inconsistent state: {0}")]
    State(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    /// Short class name, used by the CLI when reporting failures.
    pub fn class(&self) -> &'static str {
        match self {
            Error::Format(_) => "FormatError",
            Error::Data(_) => "DataError",
            Error::Config(_) => "ConfigError",
            Error::Domain(_) => "DomainError",
            Error::Index { .. } => "IndexError",
            Error::State(_) => "StateError",
            Error::Io(_) => "IoError",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_index(index: usize, len: usize) -> Result<()> {
    if index < len {
        Ok(())
    } else {
        Err(Error::Index { index, len })
    }
}
