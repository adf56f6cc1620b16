use thiserror::Error;

/// Errors produced by the geometry, subproblem and solver layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },

    #[error("matrix is not on the Stiefel manifold: ||X^T X - I||_F = {0:e}")]
    NotOnManifold(f64),

    #[error("retraction failed: {0}")]
    Retraction(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("multiplier is not symmetric: ||L - L^T||_F = {0:e}")]
    NotSymmetric(f64),

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("linear solve failed: {0}")]
    LinearSolve(&'static str),

    #[error("line search exhausted {backtracks} backtracks at iteration {iteration}")]
    BacktrackExhausted { iteration: usize, backtracks: usize },

    #[error("inner solver returned an unusable direction at iteration {iteration} (residual {residual:e})")]
    InnerSolve { iteration: usize, residual: f64 },

    #[error("malformed matrix file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_shape(
    expected: (usize, usize),
    got: (usize, usize),
) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::ShapeMismatch { expected, got })
    }
}
