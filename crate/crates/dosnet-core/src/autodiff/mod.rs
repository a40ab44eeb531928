//! Minimal reverse-mode differentiation over the op set the network
//! needs, plus the Adam optimizer and learning-rate schedule.

mod adam;
mod conv;
mod graph;
mod tensor;

pub mod gradcheck;

pub use adam::{lr_schedule, AdamState};
pub use graph::{ActKind, Graph, NodeId, TauInput};
pub use tensor::{DType, Tensor, TensorData};
