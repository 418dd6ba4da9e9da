//! Dense tensors, trainable parameters, reverse-mode differentiation and a
//! finite-difference checker. Everything above this module is composition.

mod gradcheck;
mod param;
mod tape;
mod tensor;

use thiserror::Error;

pub use gradcheck::{
    analytic_gradients, compare, grad_check, numeric_gradients, relative_error, GradCheckReport, ParamCheck,
};
pub use param::{sgd_step, ParamId, ParamStore, Parameter, Precision};
pub use tape::{Gradients, Tape, Var};
pub use tensor::{
    add, add_row, argmax, hadamard, lp_norm, lp_normalize, matmul, matmul_nt, matmul_tn, mul_row, sigmoid,
    sigmoid_scalar, softmax, softmax_cross_entropy, tanh, Tensor,
};

/// Guard used by ℓp normalization against a zero vector.
pub const NORM_EPS: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("invalid tensor shape {0:?}")]
    InvalidShape(Vec<usize>),
    #[error("shape {shape:?} needs {} values, got {len}", shape.iter().product::<usize>())]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("expected a rank-{expected} tensor, got shape {shape:?}")]
    Rank { expected: usize, shape: Vec<usize> },
    #[error("rows have different lengths")]
    Ragged,
    #[error("{op}: incompatible shapes {left:?} and {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("{op}: non-finite value at flat index {index}")]
    NonFinite { op: &'static str, index: usize },
    #[error("non-finite gradient for parameter `{0}`")]
    NonFiniteGradient(String),
    #[error("target class {target} out of range for {classes} classes")]
    TargetOutOfRange { target: usize, classes: usize },
    #[error("norm order must be >= 1, got {0}")]
    InvalidNormOrder(f64),
    #[error("backward needs a single-element loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
}
