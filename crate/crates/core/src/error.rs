use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid field: {0}")]
    InvalidField(String),

    #[error("grid mismatch: expected {expected:?}, got {got:?}")]
    GridMismatch { expected: (usize, usize), got: (usize, usize) },

    #[error("channel count mismatch: expected {expected}, got {got}")]
    ChannelMismatch { expected: usize, got: usize },

    #[error("channel stack must hold at least one channel")]
    EmptyStack,

    #[error("empty dataset")]
    EmptyDataset,

    #[error("stride {stride} does not divide {extent} - 1")]
    BadStride { stride: usize, extent: usize },

    #[error("target resolution {0} is below the minimum of 2")]
    ResolutionTooSmall(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("conjugate gradients did not converge in {iterations} iterations (relative residual {residual:e})")]
    CgNotConverged { iterations: usize, residual: f64 },

    #[error("CFL bound violated at step {step}: dt = {dt:e} exceeds {limit} * dx / max|u| = {bound:e}")]
    CflViolation { step: usize, dt: f64, bound: f64, limit: f64 },

    #[error("non-finite value encountered at step {step}: {context}")]
    NonFinite { step: usize, context: String },

    #[error("step index {t} outside 1..={steps}")]
    StepOutOfRange { t: usize, steps: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("backward called without a recorded forward pass")]
    BackwardWithoutForward,

    #[error("container: {0}")]
    Container(String),

    #[error("checksum mismatch: stored {stored:016x}, computed {computed:016x}")]
    Checksum { stored: u64, computed: u64 },

    #[error("unsupported schema version {0}")]
    Version(u32),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
