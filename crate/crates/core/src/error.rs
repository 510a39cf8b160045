use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Malformed input file. The message names the offending field or byte offset.
    #[error("parse error: {0}")]
    Parse(String),

    /// Well-formed file whose contents do not describe a consistent object.
    #[error("validation error: {0}")]
    Validation(String),

    /// An emitted adversarial example left its perturbation budget.
    #[error("budget violation: {0}")]
    Budget(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
