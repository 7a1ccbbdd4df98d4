//! Reverse-mode automatic differentiation over dense `f64` tensors and the
//! two parameter-update rules used by training (Adam and plain descent).

mod optim;
mod params;
mod tape;
mod tensor;

use thiserror::Error;

pub use optim::{adam_step, sgd_step, AdamState, Optimizer, OptimizerKind};
pub use params::{GradientMap, ParamStore};
pub use tape::{gelu, softmax_rows, Tape, Var, LOG_FLOOR};
pub use tensor::Tensor;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutodiffError {
    #[error("loss must be a scalar, got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },
    #[error("non-finite value at node {node} ({op}) during {pass} pass")]
    NonFinite {
        node: usize,
        op: &'static str,
        pass: &'static str,
    },
    #[error("shape mismatch for '{name}': expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("unknown parameter '{0}'")]
    UnknownParameter(String),
}
