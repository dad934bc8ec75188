use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("index out of range: {0}")]
    OutOfRange(String),
    #[error("node is not a leaf")]
    NotALeaf,
    #[error("stale node handle")]
    StaleNode,
    #[error("least-squares system is rank deficient for bucket {bucket}")]
    SingularSystem { bucket: usize },
    #[error("pruning stalled: no leaf has weight <= {tau}")]
    PruningStalled { tau: u32 },
    #[error("missing shift: {0}")]
    MissingShift(String),
    #[error("io error")]
    Io(#[from] std::io::Error),
    #[error("json error")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
