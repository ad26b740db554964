use thiserror::Error;

/// Errors raised by prior construction and evaluation.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A distribution or model specification is malformed.
    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    /// Matrix or vector shapes do not agree.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// The divergence map is flat at the evaluation point, so the
    /// change-of-variables density is not defined.
    #[error("degenerate divergence map at layer {layer}: |dD/dtau| = {derivative:e}")]
    Degenerate { layer: usize, derivative: f64 },

    /// Bracket expansion never reached the target divergence.
    #[error("divergence map appears bounded: D({upper:e}) = {value:e} < target {target:e}")]
    UnboundedMap { upper: f64, value: f64, target: f64 },

    /// A required input was empty or otherwise unusable.
    #[error("precondition failed: {0}")]
    Precondition(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidSpec(msg.into())
}
