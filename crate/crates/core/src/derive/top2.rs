//! Fixed-topology decode used by the baseline: every intermediate node keeps
//! exactly its two strongest input edges.

use std::collections::{BTreeMap, BTreeSet};

use stretchnas_autodiff::Tensor;

use crate::error::{Error, Result};
use crate::search_space::{CellKind, CellOp};

use super::decode::decode_operations;
use super::DerivedCell;

fn softmax_probs(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|&s| (s - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|&e| e / sum).collect()
}

/// Strength of an edge for ranking: the largest mixture probability among
/// its real operations. The null operation takes part in the softmax but
/// cannot be the strength itself.
fn edge_importance(scores: &Tensor, ops: &[CellOp]) -> f64 {
    let probs = softmax_probs(scores.data());
    probs
        .iter()
        .zip(ops)
        .filter(|(_, &op)| op != CellOp::Zero)
        .map(|(&p, _)| p)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Keeps the two most important input edges of every intermediate node, then
/// assigns each kept edge its strongest real operation. Importance ties
/// resolve to the lower source node. Nothing is ever removed, so the result
/// always has exactly `2 * (n - 2)` edges.
pub fn top2_decode(
    alpha: &BTreeMap<(usize, usize), Tensor>,
    n_nodes: usize,
    ops: &[CellOp],
    kind: CellKind,
) -> Result<DerivedCell> {
    if n_nodes < 4 {
        return Err(Error::config(format!(
            "cell needs at least 4 nodes, got {n_nodes}"
        )));
    }
    let mut kept = BTreeSet::new();
    for node in 3..=n_nodes {
        let mut ranked: Vec<(usize, f64)> = Vec::new();
        for src in 1..node {
            let scores = alpha
                .get(&(src, node))
                .ok_or_else(|| Error::config(format!("no mixing weights for edge {src} -> {node}")))?;
            if scores.data().len() != ops.len() {
                return Err(Error::config(format!(
                    "edge {src} -> {node} has {} scores for {} operations",
                    scores.data().len(),
                    ops.len()
                )));
            }
            ranked.push((src, edge_importance(scores, ops)));
        }
        // Stable sort by descending importance keeps the lower source first
        // among ties because candidates were pushed in ascending order.
        ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
        for &(src, _) in ranked.iter().take(2) {
            kept.insert((src, node));
        }
    }
    let edges = decode_operations(alpha, &kept, ops)?;
    Ok(DerivedCell {
        n_nodes,
        kind,
        edges,
        removed: BTreeSet::new(),
    })
}
