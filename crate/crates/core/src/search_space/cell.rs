//! Cell DAG forward pass with merged topology factors.

use std::collections::BTreeMap;

use stretchnas_autodiff::{Error as AdError, Result as AdResult, Tape, Val};

use super::ops::{mixed_op_forward, CellOp};
use crate::topology::merge::MergedFactors;

/// Static shape of a cell: node count, candidate set, reduction role.
/// Nodes 1 and 2 are inputs; 3..=n_nodes are intermediates and their
/// channel-concatenated outputs form the cell output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellSpec {
    pub n_nodes: usize,
    pub ops: Vec<CellOp>,
    pub reduction: bool,
}

impl CellSpec {
    pub fn validate(&self) -> AdResult<()> {
        if self.n_nodes < 4 {
            return Err(AdError::contract(format!(
                "a cell needs at least 4 nodes, got {}",
                self.n_nodes
            )));
        }
        if self.ops.is_empty() {
            return Err(AdError::contract("empty candidate op set"));
        }
        Ok(())
    }

    /// Stride of the op on edge (i, j): reduction cells downsample on
    /// edges leaving the input nodes.
    pub fn edge_stride(&self, i: usize) -> usize {
        if self.reduction && i <= 2 {
            2
        } else {
            1
        }
    }
}

/// One cell instantiated on a tape: per-edge operation scores and
/// parameters. Keys of `edge_params` inner maps are "{op_name}.{suffix}".
pub struct CellOnTape {
    pub spec: CellSpec,
    pub alpha: BTreeMap<(usize, usize), Val>,
    pub edge_params: BTreeMap<(usize, usize), BTreeMap<String, Val>>,
    pub bn_eps: f64,
}

/// Compute every intermediate node as the factor-weighted sum of mixed
/// ops over its in-edges and concatenate the intermediates by channel.
///
/// Every edge (i, j) with j intermediate must have a factor; gradients
/// flow through both the op scores and the factors.
pub fn cell_forward(
    tape: &mut Tape,
    cell: &CellOnTape,
    x1: Val,
    x2: Val,
    factors: &MergedFactors,
) -> AdResult<Val> {
    cell.spec.validate()?;
    let n = cell.spec.n_nodes;
    if factors.n_nodes != n {
        return Err(AdError::contract(format!(
            "factor map is for {} nodes, cell has {n}",
            factors.n_nodes
        )));
    }
    let empty = BTreeMap::new();
    let mut nodes: BTreeMap<usize, Val> = BTreeMap::new();
    nodes.insert(1, x1);
    nodes.insert(2, x2);
    for j in 3..=n {
        let mut acc: Option<Val> = None;
        for i in 1..j {
            let s = factors.expect(i, j)?;
            let alpha = cell.alpha.get(&(i, j)).copied().ok_or_else(|| {
                AdError::contract(format!("no operation scores for edge ({i},{j})"))
            })?;
            let params = cell.edge_params.get(&(i, j)).unwrap_or(&empty);
            let mixed = mixed_op_forward(
                tape,
                nodes[&i],
                alpha,
                &cell.spec.ops,
                cell.spec.edge_stride(i),
                params,
                cell.bn_eps,
            )?;
            let weighted = tape.scale(mixed, s)?;
            acc = Some(match acc {
                None => weighted,
                Some(a) => tape.add(a, weighted)?,
            });
        }
        nodes.insert(j, acc.expect("every intermediate node has predecessors"));
    }
    let outs: Vec<Val> = (3..=n).map(|j| nodes[&j]).collect();
    tape.concat_channels(&outs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::merge;
    use stretchnas_autodiff::rng::Rng;
    use stretchnas_autodiff::Tensor;

    fn pool_only_cell(n: usize) -> CellSpec {
        CellSpec {
            n_nodes: n,
            ops: vec![CellOp::Identity, CellOp::AvgPool3x3],
            reduction: false,
        }
    }

    fn zero_alpha(tape: &mut Tape, n: usize, n_ops: usize) -> BTreeMap<(usize, usize), Val> {
        merge::cell_edges(n)
            .into_iter()
            .map(|e| (e, tape.leaf(Tensor::zeros(&[n_ops])).unwrap()))
            .collect()
    }

    #[test]
    fn unit_factors_concatenate_plain_node_sums() {
        let mut rng = Rng::seed_from(31);
        let data: Vec<f64> = (0..2 * 16).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
        let mut tape = Tape::new();
        let x1 = tape
            .leaf(Tensor::new(vec![1, 2, 4, 4], data.clone()).unwrap())
            .unwrap();
        let x2 = tape
            .leaf(Tensor::new(vec![1, 2, 4, 4], data).unwrap())
            .unwrap();
        let spec = pool_only_cell(4);
        let alpha = zero_alpha(&mut tape, 4, 2);
        let cell = CellOnTape {
            spec,
            alpha,
            edge_params: BTreeMap::new(),
            bn_eps: 1e-5,
        };
        let factors = MergedFactors::unit(&mut tape, 4).unwrap();
        let y = cell_forward(&mut tape, &cell, x1, x2, &factors).unwrap();
        assert_eq!(tape.value(y).shape(), &[1, 4, 4, 4]);
    }

    #[test]
    fn zero_factors_zero_every_node() {
        let mut tape = Tape::new();
        let x1 = tape.leaf(Tensor::ones(&[1, 2, 4, 4])).unwrap();
        let x2 = tape.leaf(Tensor::ones(&[1, 2, 4, 4])).unwrap();
        let spec = pool_only_cell(5);
        let alpha = zero_alpha(&mut tape, 5, 2);
        let cell = CellOnTape {
            spec,
            alpha,
            edge_params: BTreeMap::new(),
            bn_eps: 1e-5,
        };
        let zero = tape.scalar_const(0.0).unwrap();
        let map: BTreeMap<(usize, usize), Val> = merge::cell_edges(5)
            .into_iter()
            .map(|e| (e, zero))
            .collect();
        let factors = MergedFactors::from_map(5, map);
        let y = cell_forward(&mut tape, &cell, x1, x2, &factors).unwrap();
        assert!(tape.value(y).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn missing_factor_is_a_contract_error() {
        let mut tape = Tape::new();
        let x1 = tape.leaf(Tensor::ones(&[1, 2, 4, 4])).unwrap();
        let x2 = tape.leaf(Tensor::ones(&[1, 2, 4, 4])).unwrap();
        let spec = pool_only_cell(4);
        let alpha = zero_alpha(&mut tape, 4, 2);
        let cell = CellOnTape {
            spec,
            alpha,
            edge_params: BTreeMap::new(),
            bn_eps: 1e-5,
        };
        let factors = MergedFactors::from_map(4, BTreeMap::new());
        assert!(cell_forward(&mut tape, &cell, x1, x2, &factors).is_err());
    }

    #[test]
    fn reduction_cell_halves_spatial_size() {
        let mut tape = Tape::new();
        let x1 = tape.leaf(Tensor::ones(&[1, 2, 6, 6])).unwrap();
        let x2 = tape.leaf(Tensor::ones(&[1, 2, 6, 6])).unwrap();
        let spec = CellSpec {
            n_nodes: 4,
            ops: vec![CellOp::Identity, CellOp::MaxPool3x3],
            reduction: true,
        };
        let alpha = zero_alpha(&mut tape, 4, 2);
        let cell = CellOnTape {
            spec,
            alpha,
            edge_params: BTreeMap::new(),
            bn_eps: 1e-5,
        };
        let factors = MergedFactors::unit(&mut tape, 4).unwrap();
        let y = cell_forward(&mut tape, &cell, x1, x2, &factors).unwrap();
        assert_eq!(tape.value(y).shape(), &[1, 4, 3, 3]);
    }
}
