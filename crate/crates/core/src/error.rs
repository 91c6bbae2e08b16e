use thiserror::Error;

use crate::socp::SolveStatus;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("derivative of order {requested} exceeds the supported smoothness {supported}")]
    UnsupportedOrder { requested: u32, supported: u32 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("matrix decomposition failed: {0}")]
    Decomposition(String),

    #[error("covering does not match the constraint system: {0}")]
    CoveringMismatch(String),

    #[error("empty data set")]
    EmptyData,

    #[error("conic solver finished with status {status:?} after {iterations} iterations")]
    Solver { status: SolveStatus, iterations: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
