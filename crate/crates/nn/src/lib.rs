//! Reverse-mode automatic differentiation over 4-D tensors laid out as
//! `(batch, channels, frames, samples)`.
//!
//! Every backward rule is written in terms of other graph operations, so a
//! gradient computed with [`Graph::grad`] is itself an ordinary node that can
//! be differentiated again. The gradient penalties of the vocoder critic rely
//! on this.

mod adam;
mod check;
mod graph;
mod kernels;
pub mod ops;
mod scalar;
mod tensor;

pub use adam::{Adam, AdamConfig};
pub use check::{grad_check, grad_check_sampled, max_relative_error};
pub use graph::{Graph, SampleMatrix, UnaryKind, Var};
pub use kernels::ConvGeom;
pub use scalar::Scalar;
pub use tensor::{Shape, Tensor};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NnError {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),
}

pub type Result<T> = std::result::Result<T, NnError>;
