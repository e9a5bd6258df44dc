use thiserror::Error;

/// Everything that can go wrong inside `mmi-core`.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum MmiError {
    #[error("matrix is not symmetric (max relative asymmetry {asymmetry:.3e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("matrix is not positive definite (min eigenvalue {min_eigenvalue:.3e}, max {max_eigenvalue:.3e})")]
    NotPositiveDefinite {
        min_eigenvalue: f64,
        max_eigenvalue: f64,
    },

    #[error("eigenvalue {value} at position {index} is not strictly positive")]
    NonPositiveEigenvalue { index: usize, value: f64 },

    #[error("index {index} out of range 1..={max}")]
    IndexOutOfRange { index: usize, max: usize },

    #[error("budget F must be non-negative, got {0}")]
    NegativeBudget(f64),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("target {target} nats exceeds MMI(F_max) = {reachable} nats")]
    TargetUnreachable { target: f64, reachable: f64 },

    #[error("cannot factor a rank-{rank} matrix through a layer of width {width}")]
    InfeasibleFactorization { rank: usize, width: usize },

    #[error("delta {0} is outside [0, 1/e)")]
    DeltaOutOfRange(f64),

    #[error("all mixture terms underflowed while evaluating a density")]
    NumericalUnderflow,

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T, E = MmiError> = std::result::Result<T, E>;
