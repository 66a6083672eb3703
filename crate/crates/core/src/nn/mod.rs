//! Dense feed-forward networks with analytic backpropagation and Adam.
//!
//! Everything learned in this crate (actors, critics, intrinsic predictors) is
//! an [`Mlp`]. Batches are row-major [`Matrix`] values, one sample per row, and
//! parameter gradients are summed over the batch: callers scale `output_grad`
//! to get a mean loss.

mod adam;
mod io;
mod matrix;
mod mlp;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use io::{MAGIC, VERSION};
pub use matrix::{Matrix, Scalar};
pub use mlp::{Activation, Dense, ForwardCache, Gradients, LayerGrad, Mlp};

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    Shape {
        context: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid network configuration: {0}")]
    InvalidConfig(String),
    #[error("forward cache unusable for backward: {0}")]
    ForwardCache(String),
    #[error("non-finite gradient in layer {layer}")]
    NonFinite { layer: usize },
    #[error("snapshot format: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
