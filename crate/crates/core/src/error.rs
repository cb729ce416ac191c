use thiserror::Error;

use crate::data::DataError;
use crate::tensor::TensorError;

/// Errors raised while building, running or training a model.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("configuration: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("checkpoint {}: {detail}", path.display())]
    Checkpoint { path: std::path::PathBuf, detail: String },
    #[error("non-finite gradient in {param} at step {step}")]
    NonFiniteGradient { param: String, step: u64 },
}

pub type ModelResult<T> = std::result::Result<T, ModelError>;
