//! A small reverse-mode automatic-differentiation engine.
//!
//! Values are dense row-major 64-bit matrices ([`Tensor`]). A [`Tape`]
//! records primitive operations as they are evaluated; [`Tape::backward`]
//! walks the record once in reverse to produce gradients for every node.
//! Trainable weights live in a [`ParamStore`] and are bound onto a fresh tape
//! for each forward pass.

mod adam;
mod layers;
mod tape;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use layers::{Dense, Mlp, ParamId, ParamStore};
pub use tape::{Bound, Gradients, Tape, Var};
pub use tensor::Tensor;

use alloc::string::String;
use alloc::vec::Vec;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NnError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    Shape { op: &'static str, left: Vec<usize>, right: Vec<usize> },
    #[error("tensor with shape {shape:?} needs {expected} values, got {got}")]
    ValueCount { shape: Vec<usize>, expected: usize, got: usize },
    #[error("{op} expects a rank-2 tensor, got shape {shape:?}")]
    Rank { op: &'static str, shape: Vec<usize> },
    #[error("index {index} out of range for {len} rows in {op}")]
    Index { op: &'static str, index: usize, len: usize },
    #[error("backward needs a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
    #[error("parameter count mismatch: expected {expected}, got {got}")]
    ParamCount { expected: usize, got: usize },
}
