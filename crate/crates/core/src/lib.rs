//! Few-shot node classification with a task-equivariant episode embedder.
//!
//! The pipeline: a one-layer GCN maps node attributes to semantic
//! coordinates, virtual anchors give every node a structural descriptor,
//! and per episode an E(n)-equivariant message-passing network adapts the
//! coordinates of support and query nodes before prototype classification.

pub mod embedder;
pub mod encoder;
pub mod episodes;
pub mod error;
pub mod graph;
pub mod harness;
pub mod numerics;
pub mod structural;

pub use error::{Result, TegError};
