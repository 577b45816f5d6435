//! Search engine for stretchable cells: combinatorial topology distributions
//! over a cell DAG, a mixed-operation supernet, first-order bi-level and
//! mixed-level search, and discrete architecture derivation.
//!
//! Layering, bottom up:
//!
//! * [`topology`]: pair/code space enumeration, merged per-edge factors,
//!   and the node-starvation regularizer.
//! * [`search_space`]: candidate operations, cells, and the stacked supernet.
//! * [`data`]: in-memory labeled datasets, synthetic generators, splits.
//! * [`optim`]: search state, optimizer steps, the epoch loop, checkpoints.
//! * [`derive`]: argmax decoding, validation, export formats, retraining.

pub mod data;
pub mod derive;
pub mod error;
pub mod optim;
pub mod search_space;
pub mod topology;

pub use error::{Error, Result};
