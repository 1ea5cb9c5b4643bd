use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("scenario error: {0}")]
    Scenario(String),

    #[error("illegal action {action} for unit {unit}")]
    IllegalAction { unit: u32, action: String },

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("training diverged: {0}")]
    Divergence(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("state space overflow: {0}")]
    StateSpaceOverflow(String),

    #[error("model `{model}` fault: {msg}")]
    ModelFault { model: String, msg: String },

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
