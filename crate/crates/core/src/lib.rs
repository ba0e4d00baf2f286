//! Differentiable feature-based similarity layers.
//!
//! Objects are vectors; features are learned vectors; an object "has" a
//! feature when their dot product is positive. Similarity between two
//! objects contrasts their common features with their distinctive ones.

pub mod engine;
pub mod error;
pub mod experiments;
pub mod interp;
pub mod io;
pub mod layers;
pub mod tversky;

pub use error::{Error, Result};

/// Crate version, echoed into every output directory.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
