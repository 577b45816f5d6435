//! Per-node topology score vectors.

use std::collections::BTreeMap;

use stretchnas_autodiff::Tensor;

use super::spaces;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum TopologyMode {
    InputPair,
    OutputPair,
    Arbitrary,
}

impl TopologyMode {
    pub fn name(self) -> &'static str {
        match self {
            TopologyMode::InputPair => "input-pair",
            TopologyMode::OutputPair => "output-pair",
            TopologyMode::Arbitrary => "arbitrary",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "input-pair" => Ok(TopologyMode::InputPair),
            "output-pair" => Ok(TopologyMode::OutputPair),
            "arbitrary" => Ok(TopologyMode::Arbitrary),
            other => Err(Error::config(format!(
                "unknown topology mode '{other}' (expected input-pair, output-pair, or arbitrary)"
            ))),
        }
    }

    /// Size of the score space of `node` in a cell of `n` nodes.
    /// Total over all nodes; zero means the node carries no variables.
    pub fn space_len(self, node: usize, n: usize) -> usize {
        match self {
            TopologyMode::InputPair => {
                if node >= 3 {
                    spaces::choose2(node - 1)
                } else {
                    0
                }
            }
            TopologyMode::OutputPair => spaces::choose2(n - node),
            TopologyMode::Arbitrary => {
                // The last node's space is the singleton empty code; it is
                // treated as carrying no variables.
                if node < n {
                    spaces::code_count(node, n)
                } else {
                    0
                }
            }
        }
    }

    /// Nodes that carry a score vector in this mode.
    pub fn scored_nodes(self, n: usize) -> Vec<usize> {
        (1..=n).filter(|&node| self.space_len(node, n) > 0).collect()
    }
}

/// One score vector per scored node; zero scores mean a uniform
/// distribution over the node's space.
#[derive(Debug, Clone, PartialEq)]
pub struct TopologyVariables {
    pub mode: TopologyMode,
    pub n_nodes: usize,
    betas: BTreeMap<usize, Tensor>,
}

impl TopologyVariables {
    pub fn zeros(mode: TopologyMode, n_nodes: usize) -> Self {
        let mut betas = BTreeMap::new();
        for node in mode.scored_nodes(n_nodes) {
            betas.insert(node, Tensor::zeros(&[mode.space_len(node, n_nodes)]));
        }
        TopologyVariables {
            mode,
            n_nodes,
            betas,
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = usize> + '_ {
        self.betas.keys().copied()
    }

    pub fn beta(&self, node: usize) -> Option<&Tensor> {
        self.betas.get(&node)
    }

    pub fn beta_mut(&mut self, node: usize) -> Option<&mut Tensor> {
        self.betas.get_mut(&node)
    }

    pub fn set_beta(&mut self, node: usize, scores: Tensor) -> Result<()> {
        let want = self.mode.space_len(node, self.n_nodes);
        if want == 0 {
            return Err(Error::config(format!(
                "node {node} carries no topology variables in {} mode",
                self.mode.name()
            )));
        }
        if scores.shape() != [want] {
            return Err(Error::config(format!(
                "node {node} score vector must have length {want}, got {:?}",
                scores.shape()
            )));
        }
        self.betas.insert(node, scores);
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &Tensor)> {
        self.betas.iter().map(|(&k, v)| (k, v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scored_nodes_per_mode() {
        assert_eq!(TopologyMode::InputPair.scored_nodes(5), vec![3, 4, 5]);
        assert_eq!(TopologyMode::OutputPair.scored_nodes(5), vec![1, 2, 3]);
        assert_eq!(TopologyMode::Arbitrary.scored_nodes(5), vec![1, 2, 3, 4]);
    }

    #[test]
    fn vector_lengths_match_space_sizes() {
        for n in 4..=9 {
            for mode in [
                TopologyMode::InputPair,
                TopologyMode::OutputPair,
                TopologyMode::Arbitrary,
            ] {
                let vars = TopologyVariables::zeros(mode, n);
                for (node, beta) in vars.iter() {
                    assert_eq!(beta.shape(), [mode.space_len(node, n)]);
                }
            }
        }
    }

    #[test]
    fn set_beta_checks_length() {
        let mut vars = TopologyVariables::zeros(TopologyMode::InputPair, 5);
        assert!(vars.set_beta(4, Tensor::zeros(&[3])).is_ok());
        assert!(vars.set_beta(4, Tensor::zeros(&[2])).is_err());
        assert!(vars.set_beta(2, Tensor::zeros(&[1])).is_err());
    }
}
