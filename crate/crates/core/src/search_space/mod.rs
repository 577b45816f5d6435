//! Candidate operations, mixed-op cells, and the stacked supernet.

pub mod cell;
pub mod count;
pub mod ops;
pub mod supernet;

pub use cell::{cell_forward, CellOnTape, CellSpec};
pub use count::{count_params_flops, op_cost, CountReport};
pub use ops::{apply_op, mixed_op_forward, CellOp};
pub use supernet::{
    CellKind, LayerPlan, LeafedParams, ParamStore, Supernet, SupernetConfig,
};
