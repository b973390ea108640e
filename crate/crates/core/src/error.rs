//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("degenerate triangle {index}: signed area {area:e}")]
    DegenerateTriangle { index: usize, area: f64 },

    #[error("mesh file {path}: {reason}")]
    MeshFile { path: String, reason: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("non-finite value at vertex {vertex}: {value}")]
    NonFiniteValue { vertex: usize, value: f64 },

    #[error("invalid problem data: {0}")]
    InvalidData(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },

    /// The nonlocal coefficient `u_i + b_i s` dropped to or below the
    /// positivity floor. Recoverable: the outer Newton loop reacts by
    /// shrinking its step.
    #[error("nonlocal coefficient not positive at node {node}: {value:e}")]
    CoefficientNotPositive { node: usize, value: f64 },

    #[error("matrix is singular to working precision: {0}")]
    SingularMatrix(String),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("direct solve residual {residual:e} exceeds threshold {threshold:e}")]
    ResidualCheckFailed { residual: f64, threshold: f64 },

    #[error("{what} did not converge within {max_iter} iterations")]
    MaxIterationsExceeded { what: &'static str, max_iter: usize },

    #[error("cutoff construction failed: {0}")]
    InvalidCutoff(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;
