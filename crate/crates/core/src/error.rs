use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("undefined phase: {0}")]
    UndefinedPhase(String),

    #[error("phase decomposition undefined: {0}")]
    DecompositionUndefined(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse { location: location.into(), message: message.into() }
    }
}
