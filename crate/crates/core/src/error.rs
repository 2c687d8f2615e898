use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("normalization error: {0}")]
    Normalization(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("conditioning set is empty")]
    EmptyConditioningSet,

    #[error("unknown outcome: {0}")]
    UnknownOutcome(String),

    #[error("duplicate environment id {0}")]
    DuplicateEnvironmentId(i64),

    #[error("no samples for conditioning cell {0}")]
    EmptyCell(String),

    #[error("support mismatch: {0}")]
    SupportMismatch(String),

    #[error("alpha {0} outside [0, 1]")]
    AlphaOutOfRange(f64),

    #[error("family mismatch: {0}")]
    FamilyMismatch(String),

    #[error("config mismatch: {0}")]
    ConfigMismatch(String),

    #[error("rejection budget of {0} attempts exceeded")]
    RejectionBudgetExceeded(usize),

    #[error("bad dimensions: {0}")]
    BadDims(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },

    #[error("objective is not finite ({0})")]
    NonFiniteObjective(f64),

    #[error("empty batch: {0}")]
    EmptyBatch(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("metric needs at least two environments")]
    SingleEnvironment,

    #[error("training diverged at step {step}: objective {value}")]
    DivergenceDetected { step: usize, value: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
