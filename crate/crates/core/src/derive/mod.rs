//! Discrete architecture extraction and everything downstream of it:
//! decoding, validation, serialization, rendering, and retraining.

pub mod arch;
pub mod decode;
pub mod depth;
pub mod export;
pub mod retrain;
pub mod top2;
pub mod validate;

pub use arch::{DerivedArchitecture, DerivedCell, Provenance};
pub use decode::{decode_operations, decode_topology, derive_cell, DecodedTopology};
pub use depth::cell_depth;
pub use export::{export_arch, export_dot, import_arch};
pub use retrain::{retrain_from_scratch, EvalNet, RetrainHyper, RetrainReport};
pub use top2::top2_decode;
pub use validate::{validate, ValidityReport};
