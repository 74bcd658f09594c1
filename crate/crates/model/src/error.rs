use thiserror::Error;

pub type Result<T> = std::result::Result<T, ModelError>;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("no valid clause pair remains")]
    NoValidPair,

    #[error("teacher step {step} is not a valid move: {reason}")]
    TeacherStepInvalid { step: usize, reason: String },

    #[error("invariant breach: {0}")]
    InvariantBreach(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] resprover_core::Error),

    #[error(transparent)]
    Nn(#[from] resprover_nn::NnError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
