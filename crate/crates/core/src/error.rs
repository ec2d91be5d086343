use thiserror::Error;

/// Errors raised by lattice construction, operators, solvers and oracles.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum KtfError {
    #[error("invalid lattice: {0}")]
    InvalidLattice(String),

    #[error("coordinate {coord} out of bounds on axis {axis} (size {size})")]
    OutOfBounds {
        axis: usize,
        coord: usize,
        size: usize,
    },

    #[error("length mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("design points must be strictly increasing and finite")]
    NonIncreasingDesign,

    #[error("degenerate lattice: axis {axis} has {size} points, at least {needed} required")]
    DegenerateLattice {
        axis: usize,
        size: usize,
        needed: usize,
    },

    #[error("split index {j} out of range 0..={max}")]
    SplitOutOfRange { j: usize, max: usize },

    #[error("operation requires an evenly spaced lattice")]
    NonUniform,

    #[error("{solver} did not converge after {iters} iterations (residual {residual:e})")]
    NotConverged {
        solver: &'static str,
        iters: usize,
        residual: f64,
    },

    #[error("repeated point {0} in divided difference")]
    RepeatedPoint(f64),

    #[error("problem too large for dense oracle: n = {n} exceeds cap {cap}")]
    TooLarge { n: usize, cap: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, KtfError>;
