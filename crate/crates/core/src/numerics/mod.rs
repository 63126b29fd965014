//! Dense `f32` tensors and tape-based reverse-mode differentiation.

pub mod kernels;
mod tape;
mod tensor;

pub use tape::{Gradients, Tape, Var};
pub use tensor::{Segments, Tensor};
