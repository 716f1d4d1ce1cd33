use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value in `{what}` at index {index}")]
    NonFinite { what: &'static str, index: usize },

    #[error("non-finite gradient at step {step} (index {index})")]
    NonFiniteGradient { step: u64, index: usize },

    /// A primal-mean denominator `a_j + eta / sigma2_j + rho * lambda` was not positive.
    #[error("non-positive denominator {value:e} in dimension {dim}")]
    Domain { dim: usize, value: f64 },

    #[error("filter covariance lost positive definiteness in dimension {dim}")]
    InternalConsistency { dim: usize },

    /// Bracket expansion hit its limits without a sign change of the dual derivative.
    #[error("dual bisection could not bracket a root; last bracket [{lo:e}, {hi:e}]")]
    SolverFailure { lo: f64, hi: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}

pub(crate) fn check_finite(what: &'static str, v: &[f64]) -> Result<()> {
    match v.iter().position(|x| !x.is_finite()) {
        Some(index) => Err(Error::NonFinite { what, index }),
        None => Ok(()),
    }
}
