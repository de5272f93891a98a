use thiserror::Error;

/// Errors surfaced by the coalescent toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A module-level precondition failed (e.g. coupling without dust).
    #[error("{module}: precondition failed: {reason}")]
    Precondition { module: &'static str, reason: String },

    #[error("n = {n} exceeds the exact-DP size guard {limit}; pass an explicit override")]
    SizeGuard { n: usize, limit: usize },

    #[error("insufficient replicates: got {got}, need at least {need}")]
    InsufficientReplicates { got: u64, need: u64 },

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn precondition(module: &'static str, reason: impl Into<String>) -> Error {
    Error::Precondition {
        module,
        reason: reason.into(),
    }
}
