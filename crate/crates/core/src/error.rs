use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("instance too large: {0}")]
    Size(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("postcondition violated: {0}")]
    Postcondition(String),
    #[error("weight structure mismatch: {0}")]
    Tag(String),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("parse error at {path}: {message}")]
    Parse { path: String, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;
