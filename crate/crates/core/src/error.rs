use nalgebra::DMatrix;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite evaluation of {0}")]
    NonFiniteEvaluation(String),

    #[error("singular Jacobian at Newton iteration {iteration}")]
    SingularJacobian { iteration: usize },

    #[error("Newton iteration did not converge after {iterations} steps (last residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("fixed assignment is incompatible with the linear system (residual {residual:e})")]
    InconsistentConstraint { residual: f64 },

    #[error("dynamics inconsistent at this point: <dh, ker omega> = {defect:e}")]
    InconsistentDynamics { defect: f64 },

    #[error("dynamics ambiguous after gauge fixing: kernel dimension {}", kernel.ncols())]
    AmbiguousDynamics { kernel: DMatrix<f64> },

    #[error("trajectory has {len} samples, stencil needs at least {need}")]
    TooShort { len: usize, need: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("points are not compatible with the transformation pair (defect {defect:e})")]
    NotCompatiblePoints { defect: f64 },

    #[error("probe is not in the image of the transformation (defect {defect:e})")]
    NotInImage { defect: f64 },

    #[error("Lagrangian is not of mechanical type: velocity Hessian is not positive definite")]
    NotMechanical,

    #[error("group action is not free: generator block is singular")]
    NotFreeAction,

    #[error("system is not fiberwise reducible at probe {probe}: {reason} (defect {defect:e})")]
    NotReducible {
        probe: usize,
        reason: String,
        defect: f64,
    },

    #[error("Lagrangian is not invariant under the action (defect {defect:e})")]
    NotInvariant { defect: f64 },

    #[error("integration failed at t = {t}: {source}")]
    Integration { t: f64, source: Box<Error> },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
