//! Discrete architecture data model shared by decode, export, counting and
//! retraining.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::search_space::{CellKind, CellOp};

/// One discrete cell: a set of kept edges with a single operation each, plus
/// the set of intermediate nodes that were removed outright.
///
/// Nodes are numbered 1-based. Nodes 1 and 2 are the cell inputs and are never
/// removed; intermediate nodes run from 3 to `n_nodes`. Every edge `(i, j)`
/// satisfies `i < j` and `j >= 3`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DerivedCell {
    pub n_nodes: usize,
    pub kind: CellKind,
    pub edges: BTreeMap<(usize, usize), CellOp>,
    pub removed: BTreeSet<usize>,
}

impl DerivedCell {
    /// Structural sanity used by importers and by anything that instantiates
    /// the cell as a network.
    pub fn check(&self) -> Result<()> {
        if self.n_nodes < 4 {
            return Err(Error::config(format!(
                "cell needs at least 4 nodes, got {}",
                self.n_nodes
            )));
        }
        for &node in &self.removed {
            if node < 3 || node >= self.n_nodes {
                return Err(Error::config(format!(
                    "removed node {node} outside removable range 3..{}",
                    self.n_nodes
                )));
            }
        }
        for &(i, j) in self.edges.keys() {
            if i >= j || j < 3 || i < 1 || j > self.n_nodes {
                return Err(Error::config(format!("non-topological edge {i} -> {j}")));
            }
            if self.removed.contains(&i) || self.removed.contains(&j) {
                return Err(Error::config(format!(
                    "edge {i} -> {j} touches a removed node"
                )));
            }
        }
        Ok(())
    }

    /// Intermediate nodes still present, ascending.
    pub fn kept_intermediates(&self) -> Vec<usize> {
        (3..=self.n_nodes)
            .filter(|node| !self.removed.contains(node))
            .collect()
    }

    /// Kept in-edges of `node`, ascending by source.
    pub fn in_edges(&self, node: usize) -> Vec<(usize, usize)> {
        self.edges
            .keys()
            .copied()
            .filter(|&(_, j)| j == node)
            .collect()
    }

    /// Kept out-edges of `node`, ascending by target.
    pub fn out_edges(&self, node: usize) -> Vec<(usize, usize)> {
        self.edges
            .keys()
            .copied()
            .filter(|&(i, _)| i == node)
            .collect()
    }
}

/// Where an architecture came from: enough to trace a derived file back to
/// the search run that produced it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub config_hash: String,
    pub epoch: usize,
    pub layers: usize,
}

/// A full derived network: one normal cell template, one reduction cell
/// template, and the provenance of the search that produced them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DerivedArchitecture {
    pub provenance: Provenance,
    pub normal: DerivedCell,
    pub reduction: DerivedCell,
}

impl DerivedArchitecture {
    pub fn cell(&self, kind: CellKind) -> &DerivedCell {
        match kind {
            CellKind::Normal => &self.normal,
            CellKind::Reduction => &self.reduction,
        }
    }

    pub fn check(&self) -> Result<()> {
        self.normal.check()?;
        self.reduction.check()?;
        if self.normal.kind != CellKind::Normal || self.reduction.kind != CellKind::Reduction {
            return Err(Error::config("cell kinds are swapped".to_string()));
        }
        if self.normal.n_nodes != self.reduction.n_nodes {
            return Err(Error::config(format!(
                "cell sizes differ: {} vs {}",
                self.normal.n_nodes, self.reduction.n_nodes
            )));
        }
        Ok(())
    }
}
