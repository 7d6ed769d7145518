//! Reverse-mode automatic differentiation over dense `f64` tensors.

mod adam;
pub mod archive;
pub mod gradcheck;
mod graph;
mod tensor;

pub use adam::{Adam, Parameters};
pub use archive::Archive;
pub use gradcheck::{grad_check, grad_check_many, grad_check_params, GradCheckReport, FD_STEP};
pub use graph::{Gradients, Graph, NodeId};
pub use tensor::Tensor;
