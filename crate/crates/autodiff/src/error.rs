use thiserror::Error;

use crate::tensor::Shape;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TensorError {
    #[error("{op}: dimension mismatch, expected {expected}, got {got}")]
    Dimension {
        op: &'static str,
        expected: String,
        got: String,
    },

    #[error("{op}: index {index} out of range for length {len}")]
    Index { op: &'static str, index: usize, len: usize },

    #[error("{op}: expected a scalar, got shape {shape}")]
    NotScalar { op: &'static str, shape: Shape },

    #[error("{op}: {msg}")]
    Argument { op: &'static str, msg: String },
}

impl TensorError {
    pub fn dim(op: &'static str, expected: impl ToString, got: impl ToString) -> Self {
        TensorError::Dimension {
            op,
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }

    pub fn arg(op: &'static str, msg: impl Into<String>) -> Self {
        TensorError::Argument { op, msg: msg.into() }
    }
}

pub type Result<T, E = TensorError> = std::result::Result<T, E>;
