//! Dense tensor math with hand-derived adjoints: everything the ConvLSTM
//! stack needs and nothing more.

pub mod act;
pub mod checkpoint;
pub mod conv;
pub mod loss;
pub mod norm;
pub mod optim;
pub mod tensor;

pub use checkpoint::Checkpoint;
pub use conv::{conv2d, conv2d_backward, conv3d, conv3d_backward, Grid, TimePadding};
pub use loss::{mae_loss, MaeLoss};
pub use norm::{BatchNorm, NormMode};
pub use optim::{Adam, LrSchedule, Param};
pub use tensor::{Real, Tensor};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("channel mismatch: kernel expects {expected} input channels, got {got}")]
    ChannelMismatch { expected: usize, got: usize },
    #[error("batch is empty")]
    EmptyBatch,
    #[error("forward cache already consumed by a backward pass; run forward again")]
    GraphReused,
    #[error("checkpoint format: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
