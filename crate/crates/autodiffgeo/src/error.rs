//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Bad user-facing configuration (unknown names, unparsable files,
    /// unbound parameters).
    #[error("configuration error: {0}")]
    Config(String),

    /// Invalid geometric or algorithmic input (concave Poly2D, non-positive
    /// radius, unsorted material levels, ...).
    #[error("validation error: {0}")]
    Validation(String),

    /// API contract violated by the caller (shape mismatch, backward before
    /// forward, mixed grids).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Non-finite values or failed numerics.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Linear solve finished above the residual tolerance.
    #[error("solver residual {residual:e} exceeds tolerance {tol:e}")]
    SolverResidual { residual: f64, tol: f64 },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code class for the CLI: 2 for configuration problems,
    /// 3 for numeric/solver failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Validation(_) | Error::Contract(_) | Error::Io(_) => 2,
            Error::Numeric(_) | Error::SolverResidual { .. } => 3,
        }
    }
}
