use thiserror::Error;

/// Errors raised by the completion pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("invalid sample set: {0}")]
    InvalidSample(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("point is not on the rank-{k} PSD manifold: {reason}")]
    NotOnManifold { k: usize, reason: String },

    /// Fewer than `k` eigenvalues of `Y + tV` are positive.
    #[error("retraction left the rank-{k} manifold: only {positive} eigenvalues above threshold")]
    RankDeficientRetraction { k: usize, positive: usize },

    #[error("line search failed after {backtracks} backtracks")]
    LineSearchFailure { backtracks: usize },

    #[error("degenerate reference configuration: {0}")]
    DegenerateReference(String),

    #[error("empty sample: {0}")]
    EmptySample(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn dim_err(msg: impl Into<String>) -> Error {
    Error::InvalidDimension(msg.into())
}
