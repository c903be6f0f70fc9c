//! Error types shared across the crate.

use thiserror::Error;

/// Errors produced by model evaluation, filtering and metric computation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Inverse-Wishart degrees of freedom too small for the mean to exist.
    #[error("inverse-Wishart dof {dof} must exceed {min} for the mean to exist")]
    DofTooSmall { dof: f64, min: f64 },

    /// A matrix that must be invertible is numerically singular.
    #[error("singular matrix in {0}")]
    SingularMatrix(&'static str),

    /// An input matrix that must be symmetric positive definite is not.
    #[error("matrix is not symmetric positive definite in {0}")]
    NonSpdInput(&'static str),

    /// Position too close to the sensor origin for a polar noise conversion.
    #[error("position is degenerate (range below 1e-9 m)")]
    DegeneratePosition,

    /// A non-empty scan was passed to an update without any partition.
    #[error("non-empty scan requires at least one partition")]
    NoPartitions,

    /// Scenario id outside of the implemented set.
    #[error("unknown scenario {0}")]
    UnknownScenario(u32),

    /// Aggregation over reports of unequal length.
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
