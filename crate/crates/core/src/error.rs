use thiserror::Error;

#[derive(Debug, Error)]
pub enum FemmError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("time index {t} out of range: {reason}")]
    IndexOutOfRange { t: usize, reason: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("series must be complete: {0}")]
    Incomplete(String),

    #[error("dimension {dim} has no observed values, cannot interpolate")]
    FullyMissing { dim: usize },

    #[error(
        "linear system is singular or ill-conditioned (condition estimate {condition:.3e}); \
         use a larger ridge parameter"
    )]
    IllConditioned { condition: f64 },

    #[error(
        "linear program failed after {iterations} iterations \
         (primal residual {primal_residual:.3e}, dual residual {dual_residual:.3e}, gap {gap:.3e})"
    )]
    LpFailure {
        iterations: usize,
        primal_residual: f64,
        dual_residual: f64,
        gap: f64,
    },

    #[error("empty cluster: regime {0} carries no weight")]
    EmptyCluster(usize),

    #[error("cannot mark {requested} entries missing, only {eligible} are eligible")]
    MaskExhausted { requested: usize, eligible: usize },

    #[error("all {restarts} restarts failed: {details}")]
    AllRestartsFailed { restarts: usize, details: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, FemmError>;
