//! Continual intent-classification benchmark.
//!
//! Label-disjoint task sequences are built from an intent corpus, a
//! backbone (feed-forward, GRU or Transformer encoder) is trained task by
//! task, and replay (MIR), distillation (LwF) and task masking (HAT) can be
//! switched on in any combination. After every task the model is evaluated
//! on all tasks seen so far, and the resulting performance matrices yield
//! average accuracy, average macro-F1 and backward transfer.

pub mod autograd;
pub mod data;
pub mod error;
pub mod metrics;
pub mod models;
pub mod report;
pub(crate) mod seeds;
pub mod strategies;
#[cfg(test)]
pub(crate) mod testutil;
pub mod trainer;

pub use error::{Error, Result};
