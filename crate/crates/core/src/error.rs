use thiserror::Error;

/// Errors raised by the simulation library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("root solve did not converge: {0}")]
    NoConvergence(String),

    #[error("integrator step size collapsed at t = {time}: {reason}")]
    StepSizeCollapse { time: f64, reason: String },

    #[error("kinetic Monte Carlo stalled at t = {time}: {reason}; state = {state:?}")]
    Stalled { time: f64, reason: String, state: Vec<u64> },

    #[error("eigen solver failure: {0}")]
    Eigen(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter { name, reason: reason.into() }
}
