//! Reverse-mode differentiation over complex tensors.
//!
//! Values are recorded on a [`Tape`] as operations run (define-by-run).
//! [`Tape::backward`] walks the tape in reverse and returns, for a real scalar
//! loss `f`, the gradient `g = 2 ∂f/∂z̄` at every leaf. With this convention
//! `Re g` and `Im g` are the partial derivatives with respect to the real and
//! imaginary parts of `z`, so `g` can be used directly as the Euclidean
//! gradient of the real parameterisation.
//!
//! Gradients only flow into leaves. [`Tape::detach`] copies a value into a new
//! leaf, which is how inputs computed from other gradients are kept first-order.

mod check;
mod tape;
mod tensor;

pub use check::{grad_check, grad_check_scaled};
pub use tape::{GradientMap, NodeId, Op, Tape, TapeNode};
pub use tensor::ComplexTensor;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CdiffError {
    #[error("{op}: shape mismatch between {left:?} and {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("{op}: {detail}")]
    Domain { op: &'static str, detail: String },
    #[error("loss must be real, imaginary part is {0:e}")]
    NonRealLoss(f64),
    #[error("loss must be a scalar, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("{op} takes {expected} inputs, got {got}")]
    Arity {
        op: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("node {0} is not on this tape")]
    UnknownNode(usize),
}
