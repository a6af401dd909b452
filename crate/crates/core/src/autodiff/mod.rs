//! Minimal dense-tensor engine with reverse-mode differentiation.
//!
//! Covers exactly what the forecaster needs: linear maps over the trailing
//! axis, GELU, pairwise average pooling and a replicate-padded moving
//! average along the time axis, plus the usual elementwise and reduction
//! primitives.

mod gradcheck;
mod tape;
mod tensor;

pub use gradcheck::{central_difference, relative_error};
pub use tape::{Divisor, Gradients, Tape, Var};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutodiffError {
    #[error("dimension error: {0}")]
    Shape(String),
    #[error("length error: {0}")]
    Length(String),
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },
    #[error("contract error: {0}")]
    Contract(String),
    #[error("tape already consumed by a backward pass")]
    TapeConsumed,
}
