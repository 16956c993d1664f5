use thiserror::Error;

use crate::expr::{EvalError, ParseError};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("point index {index} out of range for a time scale with {len} points")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("invalid time scale: {0}")]
    InvalidScale(String),

    #[error("delta derivative undefined at index {index}: the last point of T^kappa has index {kappa_last}")]
    OutsideKappa { index: usize, kappa_last: usize },

    #[error("reversed integration bounds: from index {from} > to index {to}")]
    ReversedBounds { from: usize, to: usize },

    #[error("grid functions live on different time scales")]
    ScaleMismatch,

    #[error("grid function has {got} values but the time scale has {expected} points")]
    LengthMismatch { expected: usize, got: usize },

    #[error(transparent)]
    Parse(#[from] ParseError),

    #[error(transparent)]
    Eval(#[from] EvalError),

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("inadmissible candidate: {0}")]
    Inadmissible(String),

    #[error("dynamics violated: worst residual {residual:e} at t = {t} (index {index}), tolerance {tolerance:e}")]
    DynamicsViolation {
        index: usize,
        t: f64,
        residual: f64,
        tolerance: f64,
    },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("singular Jacobian (condition estimate {condition:e})")]
    SingularJacobian { condition: f64 },

    #[error("Newton iteration diverged after {iterations} iterations (residual norm {residual:e})")]
    Divergence { iterations: usize, residual: f64 },

    #[error("implicit state step at t = {t} (index {index}) did not converge")]
    ImplicitStep { index: usize, t: f64 },

    #[error("end-point consistency x(T) = zeta did not converge (gap {gap:e})")]
    Consistency { gap: f64 },

    #[error("{0}")]
    Io(#[from] std::io::Error),

    #[error("line {line}: {message}")]
    ProblemFile { line: usize, message: String },

    #[error("{0}")]
    Csv(String),
}
