//! Dense tensors, a recording autodiff tape, RMSprop and a finite-difference oracle.

mod gradcheck;
mod graph;
mod rmsprop;
mod tensor;

pub use gradcheck::{finite_diff_grad, finite_diff_param, max_relative_error, relative_error};
pub use graph::{Elementwise, Graph, ParamId, ParamStore, Var};
pub use rmsprop::{RmspropConfig, RmspropState};
pub use tensor::Tensor;

#[cfg(test)]
mod tests;
