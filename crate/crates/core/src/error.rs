use std::path::PathBuf;

use thiserror::Error;

/// A caller broke a documented precondition (value out of range, empty input).
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("contract violation: {message}")]
pub struct ContractError {
    pub message: String,
}

impl ContractError {
    pub fn new(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Contract(#[from] ContractError),

    #[error("unknown environment `{0}`")]
    UnknownEnv(String),

    #[error("action `{action}` is not in the vocabulary of this {env} episode")]
    ForeignAction { env: String, action: String },

    #[error("infeasible action `{action}`: {violated}")]
    InfeasibleAction { action: String, violated: String },

    #[error("cannot parse observation: {0}")]
    Parse(String),

    #[error("no plan within {max_steps} steps for episode {episode}")]
    Unsolvable { episode: String, max_steps: usize },

    #[error("model for `{model}` cannot score `{episode}` episodes")]
    EnvMismatch { model: String, episode: String },

    #[error("training diverged at epoch {epoch}, batch {batch}: loss = {loss}")]
    Diverged { epoch: usize, batch: usize, loss: f64 },

    #[error("adapter error: {0}")]
    Adapter(String),

    #[error("decoding failed: {0}")]
    Decode(String),

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn contract(message: impl Into<String>) -> Self {
        Error::Contract(ContractError::new(message))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
