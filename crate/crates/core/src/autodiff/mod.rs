//! Dense tensors, reverse-mode differentiation, Adam, gradient checks and
//! parameter checkpoints.

mod adam;
mod checkpoint;
mod gradcheck;
pub mod nn;
mod params;
mod tape;
mod tensor;

pub use adam::{constant_grads, Adam, AdamConfig};
pub use checkpoint::{read_checkpoint, write_checkpoint};
pub use gradcheck::{gradient_check, relative_error, GradCheckReport, RELATIVE_FLOOR};
pub use params::{glorot, Bound, ParamGrads, ParamSet};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

#[derive(Debug, thiserror::Error)]
pub enum AutodiffError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("checkpoint format: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
