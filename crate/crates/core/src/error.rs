use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed corpus input; `line` is 1-based.
    #[error("{msg} at line {line}")]
    Parse { line: usize, msg: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A parameter or estimate became NaN or infinite.
    #[error("numeric failure at step {step}: {msg}")]
    Numeric { step: u64, msg: String },

    /// Corrupt or truncated binary file.
    #[error("bad file format: {0}")]
    Format(String),

    #[error("no partition function cached for document length {0}")]
    MissingLength(u32),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
