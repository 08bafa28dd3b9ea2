//! Geodesic walks in neural-network weight space.
//!
//! Weight space is treated as a Riemannian manifold under the pullback of the
//! Euclidean output metric, `g = J^T J` averaged over a batch. The walker
//! moves from a trained network toward a goal (a sparsity plane, another
//! trained network) while minimizing the functional change per step.

pub mod error;
pub mod geometry;
pub mod io;
pub mod nn;
pub mod search;
pub mod tasks;

pub use error::{Error, Result};
