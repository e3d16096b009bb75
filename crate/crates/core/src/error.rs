use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("parse error at {line}:{col}: {msg}")]
    Parse { line: usize, col: usize, msg: String },
    #[error("verification failed: {0}")]
    Verify(String),
    #[error("transform error: {0}")]
    Transform(String),
    #[error("bufferization error: {0}")]
    Bufferize(String),
    #[error("runtime error: {0}")]
    Runtime(String),
    #[error("pipeline error: {0}")]
    Pipeline(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub fn transform_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Transform(msg.into()))
}
