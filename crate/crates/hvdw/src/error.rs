use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid Lie algebra spec: {0}")]
    InvalidSpec(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("not a group element: {0}")]
    NotGroupElement(String),
    #[error("non-unimodular algebra `{0}`: the structure group must be compact and unimodular")]
    NonUnimodular(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("truncation loss: {0}")]
    Truncation(String),
    #[error("constraint violated: {0}")]
    Constraint(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
