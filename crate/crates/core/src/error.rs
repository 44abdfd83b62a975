use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("trial {trial}: {message}")]
    Validation { trial: String, message: String },

    #[error("response is empty after normalization")]
    EmptyResponse,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("no predictions for {} trial(s): {}", .0.len(), .0.join(", "))]
    MissingPrediction(Vec<String>),

    #[error("word {0:?} is not in the model vocabulary")]
    Vocab(String),

    #[error("numerical failure: {0}")]
    Numerics(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn contract(msg: impl Into<String>) -> Error {
    Error::Contract(msg.into())
}
