use thiserror::Error;

use depwise_autodiff::TensorError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] TensorError),

    #[error("unknown relation label `{0}`")]
    UnknownLabel(String),

    #[error("unknown entity `{0}`")]
    UnknownEntity(String),

    #[error("unknown node id {0}")]
    UnknownNode(usize),

    #[error("conflicting relations between {a} and {b}: {first} vs {second}")]
    Conflict {
        a: String,
        b: String,
        first: String,
        second: String,
    },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("input error: {0}")]
    Input(String),

    #[error("sentence {index}: cannot parse `{sentence}`")]
    Parse { index: usize, sentence: String },

    #[error("line {line}: {msg}")]
    Data { line: usize, msg: String },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("training diverged at epoch {epoch}: {msg}")]
    Diverged { epoch: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
