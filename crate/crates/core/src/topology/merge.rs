//! Per-edge factors merged from pair/code probabilities.
//!
//! Each node's score vector is softmaxed on the tape and the probability
//! mass of every pair/code containing a given edge is summed into that
//! edge's scalar factor, so gradients flow back into the scores.

use std::collections::BTreeMap;

use stretchnas_autodiff::{Error as AdError, Result as AdResult, Tape, Val};

use super::spaces::{self, choose2};
use super::vars::TopologyMode;

/// Edges that carry computation: (i, j) with i < j and j an intermediate.
pub fn cell_edges(n: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for j in 3..=n {
        for i in 1..j {
            out.push((i, j));
        }
    }
    out
}

/// Scalar factor per computable edge, live on a tape.
#[derive(Debug, Clone)]
pub struct MergedFactors {
    pub n_nodes: usize,
    map: BTreeMap<(usize, usize), Val>,
}

impl MergedFactors {
    pub fn get(&self, i: usize, j: usize) -> Option<Val> {
        self.map.get(&(i, j)).copied()
    }

    pub fn expect(&self, i: usize, j: usize) -> AdResult<Val> {
        self.map.get(&(i, j)).copied().ok_or_else(|| {
            AdError::contract(format!("no merged factor for edge ({i},{j})"))
        })
    }

    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize), Val)> + '_ {
        self.map.iter().map(|(&e, &v)| (e, v))
    }

    /// Unit factors for every edge: the plain fixed-topology cell.
    pub fn unit(tape: &mut Tape, n_nodes: usize) -> AdResult<Self> {
        let one = tape.scalar_const(1.0)?;
        let map = cell_edges(n_nodes).into_iter().map(|e| (e, one)).collect();
        Ok(MergedFactors { n_nodes, map })
    }

    /// Factor map from explicit per-edge scalars.
    pub fn from_map(n_nodes: usize, map: BTreeMap<(usize, usize), Val>) -> Self {
        MergedFactors { n_nodes, map }
    }
}

fn check_scores(
    tape: &Tape,
    mode: TopologyMode,
    n: usize,
    beta: &BTreeMap<usize, Val>,
) -> AdResult<()> {
    let want = mode.scored_nodes(n);
    let have: Vec<usize> = beta.keys().copied().collect();
    if have != want {
        return Err(AdError::contract(format!(
            "{} mode over {n} nodes scores nodes {want:?}, got {have:?}",
            mode.name()
        )));
    }
    for (&node, &val) in beta {
        let len = mode.space_len(node, n);
        if tape.value(val).shape() != [len] {
            return Err(AdError::contract(format!(
                "node {node} score vector must have length {len}"
            )));
        }
    }
    Ok(())
}

/// Merge a full set of per-node scores into per-edge factors.
///
/// The score map must cover exactly the mode's scored nodes; factors are
/// produced for every edge of [`cell_edges`].
pub fn merged_factors(
    tape: &mut Tape,
    mode: TopologyMode,
    n: usize,
    beta: &BTreeMap<usize, Val>,
) -> AdResult<MergedFactors> {
    check_scores(tape, mode, n, beta)?;
    let mut map = BTreeMap::new();
    match mode {
        TopologyMode::InputPair => {
            for j in 3..=n {
                let p = tape.softmax(beta[&j])?;
                let pairs = spaces::input_pairs(j);
                for i in 1..j {
                    let weights: Vec<f64> = pairs
                        .iter()
                        .map(|&(m, k)| if m == i || k == i { 1.0 } else { 0.0 })
                        .collect();
                    map.insert((i, j), tape.weighted_sum(p, weights)?);
                }
            }
        }
        TopologyMode::OutputPair => {
            for (&i, &scores) in beta {
                let p = tape.softmax(scores)?;
                let pairs = spaces::output_pairs(i, n);
                let scale = choose2(n - i) as f64 / (n - i - 1) as f64;
                for j in (i + 1).max(3)..=n {
                    let weights: Vec<f64> = pairs
                        .iter()
                        .map(|&(m, k)| if m == j || k == j { 1.0 } else { 0.0 })
                        .collect();
                    let raw = tape.weighted_sum(p, weights)?;
                    map.insert((i, j), tape.smul(raw, scale)?);
                }
            }
            // A node with a single successor has no pairs to score; its one
            // outgoing edge is always on.
            map.insert((n - 1, n), tape.scalar_const(1.0)?);
        }
        TopologyMode::Arbitrary => {
            for (&i, &scores) in beta {
                let p = tape.softmax(scores)?;
                let count = spaces::code_count(i, n);
                let scale = (count - 1) as f64 / (count / 2) as f64;
                for j in (i + 1).max(3)..=n {
                    let weights: Vec<f64> = (0..count)
                        .map(|k| if spaces::code_has_edge(i, n, k, j) { 1.0 } else { 0.0 })
                        .collect();
                    let raw = tape.weighted_sum(p, weights)?;
                    map.insert((i, j), tape.smul(raw, scale)?);
                }
            }
        }
    }
    debug_assert_eq!(
        map.keys().copied().collect::<Vec<_>>(),
        {
            let mut edges = cell_edges(n);
            edges.sort_unstable();
            edges
        },
        "factor map must cover the computable edge set exactly"
    );
    Ok(MergedFactors { n_nodes: n, map })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::vars::TopologyVariables;
    use stretchnas_autodiff::Tensor;

    fn factors_for(mode: TopologyMode, n: usize, vars: &TopologyVariables) -> BTreeMap<(usize, usize), f64> {
        let mut tape = Tape::new();
        let mut beta = BTreeMap::new();
        for (node, scores) in vars.iter() {
            beta.insert(node, tape.leaf(scores.clone()).unwrap());
        }
        let merged = merged_factors(&mut tape, mode, n, &beta).unwrap();
        merged
            .iter()
            .map(|(e, v)| (e, tape.item(v).unwrap()))
            .collect()
    }

    #[test]
    fn uniform_input_mode_node4_gives_two_thirds() {
        let vars = TopologyVariables::zeros(TopologyMode::InputPair, 4);
        let f = factors_for(TopologyMode::InputPair, 4, &vars);
        for i in 1..4 {
            assert!((f[&(i, 4)] - 2.0 / 3.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn input_mode_mass_sums_to_two_per_node() {
        let mut vars = TopologyVariables::zeros(TopologyMode::InputPair, 6);
        for (node, len) in [(4usize, 3usize), (5, 6), (6, 10)] {
            let scores: Vec<f64> = (0..len).map(|k| (k as f64) * 0.37 - 1.0).collect();
            vars.set_beta(node, Tensor::vector(&scores)).unwrap();
        }
        let f = factors_for(TopologyMode::InputPair, 6, &vars);
        for j in 3..=6 {
            let total: f64 = (1..j).map(|i| f[&(i, j)]).sum();
            assert!((total - 2.0).abs() <= 1e-12, "node {j}: {total}");
        }
    }

    #[test]
    fn concentrated_input_pair_saturates_its_edges() {
        let mut vars = TopologyVariables::zeros(TopologyMode::InputPair, 5);
        // Node 5's pairs start with (1,2); push all mass there.
        let mut scores = vec![0.0; 6];
        scores[0] = 50.0;
        vars.set_beta(5, Tensor::vector(&scores)).unwrap();
        let f = factors_for(TopologyMode::InputPair, 5, &vars);
        assert!((f[&(1, 5)] - 1.0).abs() <= 1e-9);
        assert!((f[&(2, 5)] - 1.0).abs() <= 1e-9);
        assert!(f[&(3, 5)] <= 1e-9);
        assert!(f[&(4, 5)] <= 1e-9);
    }

    #[test]
    fn uniform_output_mode_gives_unit_factors() {
        for n in 4..=7 {
            let vars = TopologyVariables::zeros(TopologyMode::OutputPair, n);
            let f = factors_for(TopologyMode::OutputPair, n, &vars);
            for (edge, v) in &f {
                assert!((v - 1.0).abs() <= 1e-12, "{edge:?}: {v}");
            }
            assert_eq!(f.len(), cell_edges(n).len());
        }
    }

    #[test]
    fn uniform_arbitrary_three_successors_gives_seven_eighths() {
        let vars = TopologyVariables::zeros(TopologyMode::Arbitrary, 5);
        let f = factors_for(TopologyMode::Arbitrary, 5, &vars);
        // Node 2 has successors 3,4,5: scale 7/4, uniform bit mass 1/2.
        for j in 3..=5 {
            assert!((f[&(2, j)] - 7.0 / 8.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn all_zero_code_removes_every_outgoing_edge() {
        let mut vars = TopologyVariables::zeros(TopologyMode::Arbitrary, 5);
        let mut scores = vec![0.0; 8];
        scores[0] = 60.0;
        vars.set_beta(2, Tensor::vector(&scores)).unwrap();
        let f = factors_for(TopologyMode::Arbitrary, 5, &vars);
        for j in 3..=5 {
            assert!(f[&(2, j)] <= 1e-12);
        }
    }

    #[test]
    fn wrong_node_set_is_a_contract_error() {
        let mut tape = Tape::new();
        let beta = BTreeMap::new();
        assert!(merged_factors(&mut tape, TopologyMode::InputPair, 5, &beta).is_err());
    }
}
