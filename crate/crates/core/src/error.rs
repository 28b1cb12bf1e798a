use thiserror::Error;

/// Unified error type for grid construction, parsing, solvers and I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid shape: {0}")]
    InvalidShape(String),

    #[error("fluid region of the unit cell is not edge-connected")]
    DisconnectedFluid,

    #[error("parse error at byte {offset}: expected {expected}")]
    Parse { offset: usize, expected: String },

    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdentifier { name: String, offset: usize },

    #[error("expression evaluated to a non-finite value")]
    Eval,

    #[error("solver did not converge after {iterations} iterations (residual ratio {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("saddle-point solver did not converge (momentum residual {momentum:.3e}, divergence residual {divergence:.3e})")]
    SaddleNoConvergence { momentum: f64, divergence: f64 },

    #[error("assembled right-hand side is not mean-free (projection magnitude {0:.3e})")]
    IncompatibleRhs(f64),

    #[error("cell problem is degenerate: obstacle-free cell has no permeability")]
    DegenerateCell,

    #[error("matrix is not symmetric positive definite")]
    NotSpd,

    #[error("invariant violated: {0}")]
    InvariantViolation(String),

    #[error("maximum principle violated: max |d| = {max_abs_d:.9} at t = {t:.6}")]
    MaxPrincipleViolation { max_abs_d: f64, t: f64 },

    #[error("gradient norm below 1e-14; ratio undefined")]
    ZeroGradient,

    #[error("no adjacent cell pair has a nonzero gradient norm")]
    NoValidPairs,

    #[error("config error at {pointer}: {message}")]
    Config { pointer: String, message: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(pointer: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            pointer: pointer.into(),
            message: message.into(),
        }
    }
}
