use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("{what} = {value} is outside {range}")]
    OutOfRange {
        what: &'static str,
        value: f64,
        range: &'static str,
    },
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("warm-start ceiling exceeded at node {node} (ratio {ratio:.3e} > {ceiling:.3e})")]
    WarmStart { node: usize, ratio: f64, ceiling: f64 },
    #[error("internal consistency: {0}")]
    Consistency(String),
    #[error("finite-difference oracle did not settle: {0}")]
    OracleFailure(String),
    #[error("series did not converge: {0}")]
    NonConvergent(String),
    #[error("degenerate weights at level {level}")]
    DegenerateWeights { level: usize },
    #[error("resource limit: {0}")]
    Resource(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
