use thiserror::Error;

/// Errors raised by the certification, design and simulation routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// A standing assumption of the design (quantizer window, threshold
    /// window, ...) does not hold for the supplied parameters.
    #[error("{which} violated: {detail}")]
    AssumptionViolated { which: &'static str, detail: String },

    #[error("nonlinearity evaluated outside its domain at z = {z}")]
    Domain { z: f64 },

    #[error("slope bound unavailable: {0}")]
    UnboundedSlope(String),

    /// Certification could not find (or verify) weights for the named stage.
    #[error("{stage} infeasible: {detail}")]
    Infeasible { stage: &'static str, detail: String },

    #[error("linear program failed: {0}")]
    Solver(String),

    #[error("integration produced a non-finite state at t = {time}")]
    BlowUp { time: f64 },

    #[error("config: {0}")]
    Config(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
