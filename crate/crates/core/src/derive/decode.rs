//! Argmax decoding from continuous topology scores and operation mixing
//! weights to a discrete cell.

use std::collections::{BTreeMap, BTreeSet};

use stretchnas_autodiff::Tensor;

use crate::error::{Error, Result};
use crate::search_space::{CellKind, CellOp};
use crate::topology::{code_has_edge, input_pairs, output_pairs, TopologyMode, TopologyVariables};

/// Index of the largest entry; ties resolve to the lowest index.
///
/// Strictly-greater comparison makes the tie rule fall out of the scan order,
/// and softmax monotonicity means raw scores and probabilities share the same
/// argmax, so adding a constant to every score cannot change the result.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (idx, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = idx;
        }
    }
    best
}

/// Topology part of a decoded cell: which edges survive and which
/// intermediate nodes are removed outright.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodedTopology {
    pub edges: BTreeSet<(usize, usize)>,
    pub removed: BTreeSet<usize>,
}

fn node_scores<'a>(vars: &'a TopologyVariables, node: usize) -> Result<&'a Tensor> {
    vars.beta(node)
        .ok_or_else(|| Error::config(format!("no topology scores stored for node {node}")))
}

/// Picks the highest-scoring choice per scored node and expands it into
/// concrete edges.
///
/// Pair modes expand the winning pair verbatim and remove nothing. In the
/// output-pair space a winning pair can name node 1 or 2 as a target; such
/// edges feed no computation and are dropped here, matching the forward pass
/// which only consumes edges into intermediate nodes. The output-pair space
/// also carries the always-on edge from node `n-1` to node `n`.
///
/// The free space removes intermediate node `i` when its all-zero code wins,
/// and prunes any edge whose target was removed. A removed node's own code is
/// all-zero, so it contributes no out-edges to prune.
pub fn decode_topology(vars: &TopologyVariables) -> Result<DecodedTopology> {
    let n = vars.n_nodes;
    let mut edges = BTreeSet::new();
    let mut removed = BTreeSet::new();
    match vars.mode {
        TopologyMode::InputPair => {
            for node in vars.mode.scored_nodes(n) {
                let scores = node_scores(vars, node)?;
                let (m, k) = input_pairs(node)[argmax(scores.data())];
                edges.insert((m, node));
                edges.insert((k, node));
            }
        }
        TopologyMode::OutputPair => {
            for node in vars.mode.scored_nodes(n) {
                let scores = node_scores(vars, node)?;
                let (m, k) = output_pairs(node, n)[argmax(scores.data())];
                for target in [m, k] {
                    if target >= 3 {
                        edges.insert((node, target));
                    }
                }
            }
            edges.insert((n - 1, n));
        }
        TopologyMode::Arbitrary => {
            for node in vars.mode.scored_nodes(n) {
                let scores = node_scores(vars, node)?;
                let code = argmax(scores.data());
                if code == 0 && node >= 3 {
                    removed.insert(node);
                    continue;
                }
                for target in (node + 1).max(3)..=n {
                    if code_has_edge(node, n, code, target) {
                        edges.insert((node, target));
                    }
                }
            }
            edges.retain(|&(i, j)| !removed.contains(&i) && !removed.contains(&j));
        }
    }
    Ok(DecodedTopology { edges, removed })
}

/// Picks the strongest operation per kept edge, ties resolving to the lowest
/// operation index. The null operation never wins an edge that was decoded as
/// kept, so it is excluded from the argmax.
pub fn decode_operations(
    alpha: &BTreeMap<(usize, usize), Tensor>,
    kept: &BTreeSet<(usize, usize)>,
    ops: &[CellOp],
) -> Result<BTreeMap<(usize, usize), CellOp>> {
    if ops.iter().all(|&op| op == CellOp::Zero) {
        return Err(Error::config(
            "operation set has nothing to decode".to_string(),
        ));
    }
    let mut out = BTreeMap::new();
    for &(i, j) in kept {
        let scores = alpha
            .get(&(i, j))
            .ok_or_else(|| Error::config(format!("no mixing weights for edge {i} -> {j}")))?;
        if scores.data().len() != ops.len() {
            return Err(Error::config(format!(
                "edge {i} -> {j} has {} scores for {} operations",
                scores.data().len(),
                ops.len()
            )));
        }
        let mut best: Option<usize> = None;
        for (idx, &s) in scores.data().iter().enumerate() {
            if ops[idx] == CellOp::Zero {
                continue;
            }
            match best {
                None => best = Some(idx),
                Some(b) if s > scores.data()[b] => best = Some(idx),
                _ => {}
            }
        }
        out.insert((i, j), ops[best.expect("non-null op exists")]);
    }
    Ok(out)
}

/// Full cell decode: topology first, then one operation per kept edge.
pub fn derive_cell(
    vars: &TopologyVariables,
    alpha: &BTreeMap<(usize, usize), Tensor>,
    ops: &[CellOp],
    kind: CellKind,
) -> Result<super::DerivedCell> {
    let topo = decode_topology(vars)?;
    let edges = decode_operations(alpha, &topo.edges, ops)?;
    Ok(super::DerivedCell {
        n_nodes: vars.n_nodes,
        kind,
        edges,
        removed: topo.removed,
    })
}
