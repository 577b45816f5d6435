//! Structural validity of a decoded cell.

use std::collections::BTreeSet;

use super::DerivedCell;

/// What a validity pass found.
///
/// `starved` lists kept intermediate nodes with no kept input edge: their
/// in-degree over the kept graph is zero, so they would contribute an
/// all-zero slice to the cell output. `dangling` lists cell input nodes with
/// no kept out-edge; they feed nothing but do not by themselves make the cell
/// unusable. `empty` means no intermediate node survived at all.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidityReport {
    pub starved: BTreeSet<usize>,
    pub dangling: BTreeSet<usize>,
    pub empty: bool,
    pub valid: bool,
}

/// A cell is valid iff it has at least one kept intermediate node and no
/// starved node.
pub fn validate(cell: &DerivedCell) -> ValidityReport {
    let kept = cell.kept_intermediates();
    let starved: BTreeSet<usize> = kept
        .iter()
        .copied()
        .filter(|&node| cell.in_edges(node).is_empty())
        .collect();
    let dangling: BTreeSet<usize> = [1, 2]
        .into_iter()
        .filter(|&node| cell.out_edges(node).is_empty())
        .collect();
    let empty = kept.is_empty();
    let valid = starved.is_empty() && !empty;
    ValidityReport {
        starved,
        dangling,
        empty,
        valid,
    }
}
