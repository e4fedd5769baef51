//! Reverse-mode differentiation over dense `f64` tensors.
//!
//! A [`Tape`] records operations eagerly: each call computes its value on the
//! spot and appends a node. [`Tape::backward`] then sweeps the nodes in
//! reverse to accumulate adjoints. Broadcasting is limited to matrix-vector
//! products and the row-wise bias add.

mod gradcheck;
mod tape;
mod tensor;

pub use gradcheck::check_gradient;
pub use tape::{sigmoid, Gradients, NodeId, OpKind, Tape};
pub use tensor::Tensor;

pub(crate) use tensor::dot;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutodiffError {
    #[error("{op}: incompatible shapes {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op}: unsupported rank for shape {shape:?}")]
    RankMismatch { op: &'static str, shape: Vec<usize> },
    #[error("{op}: expected {expected} inputs, got {got}")]
    Arity {
        op: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("{op}: reduction over an empty tensor")]
    EmptyReduction { op: &'static str },
    #[error("shape {shape:?} does not match data length {len}")]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("backward root must be a scalar, got shape {shape:?}")]
    NonScalarRoot { shape: Vec<usize> },
    #[error("node {0} is not on this tape")]
    UnknownNode(usize),
}
