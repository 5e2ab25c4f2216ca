use thiserror::Error;

/// Errors produced by the numerical routines of this crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An input lies outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A malformed or inconsistent argument.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// Adaptive quadrature did not reach the requested tolerance.
    #[error(
        "quadrature did not converge: estimate {estimate:e} with error {error:e} after {subdivisions} \
         subdivisions; worst subinterval [{worst_lo:e}, {worst_hi:e}] (error {worst_error:e})"
    )]
    Quadrature {
        estimate: f64,
        error: f64,
        subdivisions: usize,
        worst_lo: f64,
        worst_hi: f64,
        worst_error: f64,
    },

    /// A least-squares fit could not produce a meaningful answer.
    #[error("fit failed: {0}")]
    FitFailure(String),

    /// The design matrix of a linear fit is rank deficient.
    #[error("degenerate fit: {0}")]
    Degenerate(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_finite(name: &str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::Argument(format!("{name} must be finite, got {value}")))
    }
}
