//! Similarity, projection and linear layers over a [`ParamStore`].
//!
//! Layers hold [`ParamId`]s only. Sharing a feature bank or tying a
//! prototype bank to an embedding table is a matter of handing two layers
//! the same id; the graph then records one leaf for it and gradients from
//! every use accumulate there.
//!
//! [`ParamStore`]: crate::engine::ParamStore
//! [`ParamId`]: crate::engine::ParamId

mod linear;
mod projection;
mod registry;
mod visual;

pub use linear::Linear;
pub use projection::{BankRef, ContrastParams, PrototypeBank, TverskyProjection, TverskySimilarityLayer};
pub use registry::SharedBankRegistry;
pub use visual::{Backbone, Flatten, VisualLinear, VisualParameterization, VisualTverskyProjection};
