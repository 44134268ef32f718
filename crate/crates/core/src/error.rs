//! Error type shared by every module in this crate.

use thiserror::Error;

/// Errors raised by grid, observable, measurement, and model constructors.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// A grid or interval parameter violates its precondition.
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    /// A density was negative somewhere or identically zero.
    #[error("invalid density: {0}")]
    InvalidDensity(String),

    /// A mass or weight vector is not a (sub-)probability vector.
    #[error("invalid mass vector: {0}")]
    InvalidMass(String),

    /// An effect table violates the observable conditions
    /// (entries in [0, 1], unit row sums).
    #[error("invalid observable: {0}")]
    InvalidObservable(String),

    /// Two operands live on different state spaces.
    #[error("mismatched state spaces: {0}")]
    SpaceMismatch(String),

    /// An outcome is not in the observable's alphabet, or is never
    /// produced by any state.
    #[error("unknown outcome {outcome}: {context}")]
    UnknownOutcome { outcome: String, context: String },

    /// The measured value has probability zero under the prior, so no
    /// posterior exists.
    #[error("zero evidence: outcome {0} is impossible under the prior")]
    ZeroEvidence(String),

    /// A value had to lie on the grid but does not.
    #[error("value {value} is off-grid; nearest grid points are {below} and {above}")]
    OffGrid { value: f64, below: f64, above: f64 },

    /// A payoff evaluated to NaN, or some other scalar precondition failed.
    #[error("domain error: {0}")]
    Domain(String),

    /// A requested materialization would exceed the configured cap.
    #[error("resource limit exceeded: {0}")]
    ResourceLimit(String),
}

impl Error {
    /// True for the one error class that is about machine resources rather
    /// than the mathematical domain.
    pub fn is_resource(&self) -> bool {
        matches!(self, Error::ResourceLimit(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
