use thiserror::Error;

/// Errors produced by the actuator design library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("position {0} lies outside [0, 1]")]
    OutOfDomain(f64),

    #[error("shapes are defined on different grids ({0} vs {1} cells)")]
    GridMismatch(usize, usize),

    #[error("non-finite value at time step {step} of {what}; increase the number of time steps")]
    NonFinite { what: &'static str, step: usize },

    #[error("system matrix is not block diagonal with respect to the supplied index groups")]
    NotBlockDiagonal,

    #[error("actuator shape is empty")]
    EmptyShape,

    #[error("topological gradient vanishes; the shape is stationary")]
    ZeroGradient,

    #[error("line search stalled: step size fell below {beta_min} before any accepted update")]
    LineSearchStalled { beta_min: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
