//! Reverse-mode automatic differentiation over small dense tensors.
//!
//! A [`Tape`] records every operation of a forward pass. Calling
//! [`Tape::backward`] on a scalar node walks the tape in reverse and returns
//! per-node gradients, which can then be accumulated into the
//! [`ParamStore`] and applied with [`adam_step`].

mod adam;
mod check;
mod checkpoint;
mod param;
mod rng;
mod sample;
mod tape;
mod tensor;

pub use adam::{adam_step, AdamConfig};
pub use check::finite_diff_check;
pub use checkpoint::{Checkpoint, CheckpointEntry};
pub use param::{ParamId, ParamStore, Parameter};
pub use rng::SeededRng;
pub use sample::{gaussian_reparam, gumbel_sigmoid, gumbel_softmax};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GradError {
    #[error("{op}: incompatible shapes {lhs:?} and {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("shape {shape:?} does not match data length {len}")]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("rows have different lengths")]
    Ragged,
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("temperature must be positive, got {0}")]
    Temperature(f64),
    #[error("standard deviation must be positive, found {0}")]
    NonPositiveStd(f64),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}
