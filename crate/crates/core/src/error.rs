use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Invalid order measure or configuration value.
    #[error("invalid input: {0}")]
    Invalid(String),

    /// The explicit scheme is unstable for the requested time step.
    #[error("stability violation: sigma = {sigma:.12} > 1; largest admissible tau is {tau_max:.12e}")]
    Stability { sigma: f64, tau_max: f64 },

    /// Two lattice objects do not live on the same lattice.
    #[error("lattice mismatch: {0}")]
    Mismatch(String),

    /// A quadrature did not reach its tolerance.
    #[error("quadrature did not converge: estimate {estimate:e}, error estimate {error:e}")]
    Quadrature { estimate: f64, error: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
