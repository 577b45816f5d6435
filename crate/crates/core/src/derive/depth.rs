//! Longest-path depth of a decoded cell.

use std::collections::BTreeMap;

use super::DerivedCell;

/// Longest chain of kept edges from a cell input to any kept intermediate
/// node, counted in edges. An empty cell has depth 0; a starved node starts
/// a fresh chain at depth 1 so the metric stays defined for invalid cells.
pub fn cell_depth(cell: &DerivedCell) -> usize {
    let mut depth: BTreeMap<usize, usize> = BTreeMap::new();
    depth.insert(1, 0);
    depth.insert(2, 0);
    let mut best = 0;
    for node in cell.kept_intermediates() {
        let d = cell
            .in_edges(node)
            .iter()
            .filter_map(|(src, _)| depth.get(src))
            .max()
            .map_or(1, |&m| m + 1);
        depth.insert(node, d);
        best = best.max(d);
    }
    best
}
