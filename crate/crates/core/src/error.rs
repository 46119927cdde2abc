use thiserror::Error;

/// Errors raised by the numerical routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("argument {value} outside the domain of {function}")]
    Domain { function: &'static str, value: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("ordering violated: {0}")]
    Ordering(String),

    #[error("grid needs at least {min} points per axis, got {got}")]
    GridTooSmall { min: usize, got: usize },

    #[error("field shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("{what} did not converge (residual {residual:e})")]
    NonConvergence { what: &'static str, residual: f64 },

    #[error("truncation depth {depth} too short: tail bound {bound:e} exceeds {tol:e}")]
    Truncation { depth: usize, bound: f64, tol: f64 },

    #[error("series terms stopped decaying at term {term}: ratio to bound {ratio:.3}")]
    SeriesDivergence { term: usize, ratio: f64 },

    #[error("Monte Carlo error too large: standard error {se:e} against estimate {value:e}")]
    McVariance { value: f64, se: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
