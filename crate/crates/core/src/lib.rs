//! A small structured tensor compiler.
//!
//! Programs are SSA functions over immutable tensors. Structured operations are progressively
//! lowered by tiling, padding, vectorization, bufferization and vector lowering, and the IR can be
//! executed by the reference interpreter after every step.

pub mod error;
pub mod interp;
pub mod ir;
pub mod metrics;
pub mod pipeline;
pub mod structured;
pub mod transforms;

pub use error::{Error, Result};
