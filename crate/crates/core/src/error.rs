use thiserror::Error;

use crate::equilibrium::ThermalSolution;

/// Errors raised by the numerical routines.
#[derive(Debug, Error)]
pub enum Error {
    /// Two inputs do not live on the same grid or domain.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Input data violates a structural requirement (symmetry, finiteness, ...).
    #[error("validation failed: {0}")]
    Validation(String),

    /// An argument lies outside the admissible range.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A functional was evaluated outside its domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// The thermal fixed point iteration ran out of iterations.
    #[error("thermal solver did not converge after {} iterations (residual {:.3e})", .0.iterations, .0.residual)]
    ThermalNonConvergence(Box<ThermalSolution>),

    /// A generic iterative solver ran out of iterations.
    #[error("solver did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },

    /// A sampler could not produce a valid state.
    #[error("sampler failure: {0}")]
    Sampler(String),

    /// Malformed serialized data.
    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

pub(crate) fn shape(msg: impl Into<String>) -> Error {
    Error::Shape(msg.into())
}
