use crate::autodiff::AutodiffError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("singular parameter: {0}")]
    SingularParameter(String),

    #[error("relative misfit undefined: observation {index} is zero; use the absolute kind")]
    ZeroDatum { index: usize },

    #[error("ODE solver failed at t = {t}: step size {h:e} underflowed (problem may be stiff)")]
    StepSizeUnderflow { t: f64, h: f64 },

    #[error("ODE solver exceeded {0} steps")]
    TooManySteps(usize),

    #[error("mesh too coarse: cell Péclet number {peclet:.3} exceeds 2 (refine the grid or raise ν)")]
    MeshTooCoarse { peclet: f64 },

    #[error("training diverged at epoch {epoch}: {reason}")]
    Diverged { epoch: usize, reason: String },

    #[error("step rejected at epoch {epoch}: {reason}")]
    StepRejected { epoch: usize, reason: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
