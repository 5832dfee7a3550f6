use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("unknown state family `{0}`")]
    UnknownFamily(String),
    #[error("invalid site subset: {0}")]
    InvalidSubset(String),
    #[error("system too large: {0}")]
    TooLarge(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
}

pub type Result<T> = std::result::Result<T, Error>;
