//! Minimal reverse-mode differentiation engine over dense `f64` tensors.

mod optim;
mod tape;
mod tensor;

pub mod check;

pub use optim::{Optimizer, OptimizerKind};
pub use tape::{cross_entropy_rows, sigmoid, softmax_rows, Tape, Var};
pub use tensor::Tensor;

#[cfg(test)]
mod tests;
