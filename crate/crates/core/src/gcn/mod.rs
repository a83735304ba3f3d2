//! Dense graph convolutional network with hand-written reverse-mode
//! gradients and an Adam optimizer.

mod adam;
mod adjacency;
mod checkpoint;
mod matrix;
mod model;

use thiserror::Error;

pub use adam::{optimizer_step, AdamConfig, TrainState};
pub use adjacency::normalized_adjacency;
pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CHECKPOINT_VERSION};
pub use matrix::DenseMatrix;
pub use model::{
    loss, softmax_rows, ForwardPass, GcnConfig, GcnModel, Gradients, GraphInput, PROBABILITY_CLAMP,
};

#[derive(Debug, Error)]
pub enum GcnError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("non-finite activation in {0}")]
    NonFiniteActivation(&'static str),
    #[error("{probabilities} probability rows but {labels} labels")]
    LengthMismatch { probabilities: usize, labels: usize },
    #[error("parameter {index}: shape {param:?} but gradient/moment {other:?}")]
    ShapeMismatch { index: usize, param: (usize, usize), other: (usize, usize) },
    #[error("edge ({0}, {1}) out of range for {2} nodes")]
    IndexOutOfRange(usize, usize, usize),
    #[error("invalid model configuration: {0}")]
    InvalidConfig(String),
    #[error("i/o failure on {path}: {source}")]
    IoFailure {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("schema mismatch: {0}")]
    SchemaVersionMismatch(String),
    #[error("invalid checkpoint: {0}")]
    InvalidCheckpoint(String),
}
