//! Minimal reverse-mode automatic differentiation over dense f64 tensors.
//!
//! Eager tape execution, rank-1/2 tensors, no broadcasting beyond the
//! leading batch dimension, and an adaptive-moment optimizer. Built as the
//! numeric substrate for small recurrent latent-variable models; every op
//! keeps its backward rule short enough to audit by hand.

pub mod check;
pub mod graph;
pub mod optimizer;
pub mod tensor;

pub use check::{finite_difference_check, GradCheckReport};
pub use graph::{Gradients, Graph, NodeId};
pub use optimizer::{optimizer_step, AdamConfig, AdamState};
pub use tensor::Tensor;
