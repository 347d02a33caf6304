//! Degree-specific graph neural network engine.
//!
//! Node and graph classification with multi-task graph convolution keyed
//! by node degree (explicit per-degree weights or seeded hash maps), a
//! renormalized-adjacency baseline, degree-sliced graph readout,
//! Weisfeiler-Lehman refinement and graph kernels, and a training plus
//! verification harness around a small reverse-mode tape.

pub mod error;
pub mod graph;
pub mod hashing;
pub mod model;
pub mod tensor;
pub mod wl;

pub use error::{Error, Result};
