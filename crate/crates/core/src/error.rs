use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A documented precondition of the called operation does not hold.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("state space of {states} configurations exceeds the cap of {cap}")]
    CapExceeded { states: u128, cap: usize },

    #[error("outside the domain: {0}")]
    Domain(String),

    #[error("integrator step size underflow at t = {t}")]
    Stiffness { t: f64 },

    #[error("no estimate: {0}")]
    NoEstimate(String),

    #[error("internal error: {0}")]
    Internal(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
