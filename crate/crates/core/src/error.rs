use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("row {row} has zero norm")]
    ZeroRow { row: usize },

    #[error("diagonal entry {row} is not positive ({value})")]
    NonPositiveDiagonal { row: usize, value: f64 },

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("matrix is not positive definite (smallest eigenvalue {0:e})")]
    NotPositiveDefinite(f64),

    #[error("system is inconsistent (residual {residual:e}, allowed {allowed:e})")]
    Inconsistent { residual: f64, allowed: f64 },

    #[error("invalid ensemble: {0}")]
    InvalidEnsemble(String),

    #[error("rank-deficient expected projector (smallest eigenvalue {0:e})")]
    RankDeficient(f64),

    #[error("relaxation parameter {0} outside {1}")]
    OmegaOutOfRange(f64, &'static str),

    #[error("superoperator dimension n^2 = {dim} exceeds cap {cap}; reduce n")]
    DimensionCap { dim: usize, cap: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("exact solution unknown; trajectories need x_star")]
    MissingSolution,

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
