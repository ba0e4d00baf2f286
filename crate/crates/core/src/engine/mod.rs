//! Minimal reverse-mode automatic differentiation.
//!
//! Each forward pass records onto a fresh [`Graph`]; [`Graph::backward`]
//! sweeps it once in reverse. Persistent weights live in a [`ParamStore`]
//! and are updated by an [`OptimizerState`].

mod conv;
pub mod gradcheck;
mod graph;
mod ops;
mod optim;
mod params;
mod real;
mod tensor;

pub use conv::ConvGeometry;
pub use gradcheck::{finite_diff_check, finite_diff_check_many, norm_relative_error, relative_error, GradCheckReport};
pub use graph::{Gradients, Graph, MaskTrace, NodeId, Var};
pub use ops::{clamped_norm, row_dots, NORMALIZE_EPS};
pub use optim::{OptimizerConfig, OptimizerState};
pub use params::{Param, ParamId, ParamStore};
pub use real::{DType, Real};
pub use tensor::Tensor;

#[cfg(test)]
mod tests;
