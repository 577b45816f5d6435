//! Combinatorial topology distributions over the cell DAG.
//!
//! A cell has `n` nodes: nodes 1 and 2 are inputs, nodes 3..=n are
//! intermediates. Directed edges run only from lower to higher index, and
//! only edges into intermediate nodes carry computation.
//!
//! Three modes describe how node connectivity is scored:
//!
//! * `InputPair`: each intermediate node scores the unordered pairs of its
//!   predecessors and takes inputs from one pair.
//! * `OutputPair`: each node scores unordered pairs of its successors and
//!   sends its output along one pair.
//! * `Arbitrary`: each node scores every binary code over its successors,
//!   bit j meaning "edge to node j exists"; the all-zero code removes the
//!   node entirely.
//!
//! Softmax over a node's scores gives a distribution over its space, and
//! per-edge factors are obtained by summing the probabilities of every
//! pair/code containing that edge.

pub mod merge;
pub mod regularizer;
pub mod spaces;
pub mod vars;

pub use merge::{merged_factors, MergedFactors};
pub use regularizer::{loss_with_regularizer, regularizer};
pub use spaces::{code_bits, code_has_edge, codes, input_pairs, output_pairs};
pub use vars::{TopologyMode, TopologyVariables};
