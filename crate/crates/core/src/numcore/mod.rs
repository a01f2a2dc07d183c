//! Dense tensors and reverse-mode differentiation.

pub mod gradcheck;
mod graph;
mod tensor;

pub use graph::{Gradients, Graph, NodeId, OpKind};
pub use tensor::{Real, Tensor, MAX_RANK};
