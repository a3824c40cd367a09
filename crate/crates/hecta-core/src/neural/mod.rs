//! Minimal differentiable-computation engine: tensors, layers (dense, 3x3
//! convolution, 2x2 max-pool, ReLU, GRU cell), reverse-mode gradients,
//! RMSprop, finite-difference verification, and a binary checkpoint format.
//!
//! No graph machinery: the fixed architectures in this crate compose layer
//! forwards by hand and run the backwards in reverse, which keeps every
//! gradient path explicit and independently checkable.

pub mod checkpoint;
pub mod gradcheck;
pub mod gru;
pub mod layers;
pub mod optim;
pub mod tensor;

pub use gradcheck::{grad_check, GradCheckConfig, GradCheckReport};
pub use gru::{GruCache, GruCell};
pub use layers::{ConvBlock, ConvBlockCache, Dense};
pub use optim::{clip_global_norm, global_grad_norm, RmsProp};
pub use tensor::{ParamStore, Tensor};

#[derive(Debug, thiserror::Error)]
pub enum NeuralError {
    #[error("{context}: expected {expected} values, got {actual}")]
    ShapeMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("non-finite values in {context}")]
    NonFinite { context: &'static str },
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}
