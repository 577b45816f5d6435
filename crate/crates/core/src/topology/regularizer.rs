//! Node-starvation penalty for the binary-code topology mode.
//!
//! For each intermediate node j the penalty multiplies, over every
//! predecessor i, the gap between the best code of i that feeds j and the
//! best code of i overall:
//!
//!   r = sum_j prod_{i<j} (1 - max_{codes of i with bit j} p_i / max p_i)
//!
//! If any predecessor's top code feeds j the ratio is exactly 1 and the
//! node's term vanishes; r is 0 precisely when every intermediate node is
//! fed by the argmax decode (away from argmax ties), and positive
//! otherwise. Adding lambda * r to the task loss therefore leaves valid
//! topologies untouched while pushing starved ones toward validity.

use std::collections::BTreeMap;

use stretchnas_autodiff::{Error as AdError, Result as AdResult, Tape, Val};

use super::spaces;
use super::vars::TopologyMode;

/// Penalty over an Arbitrary-mode score map (node -> scores on tape).
pub fn regularizer(
    tape: &mut Tape,
    n: usize,
    beta: &BTreeMap<usize, Val>,
) -> AdResult<Val> {
    let want = TopologyMode::Arbitrary.scored_nodes(n);
    let have: Vec<usize> = beta.keys().copied().collect();
    if have != want {
        return Err(AdError::contract(format!(
            "regularizer over {n} nodes needs scores for nodes {want:?}, got {have:?}"
        )));
    }

    let mut probs = BTreeMap::new();
    for (&i, &scores) in beta {
        probs.insert(i, tape.softmax(scores)?);
    }

    let one = tape.scalar_const(1.0)?;
    let mut total: Option<Val> = None;
    for j in 3..=n {
        let mut term: Option<Val> = None;
        for i in 1..j {
            let p = probs[&i];
            let count = spaces::code_count(i, n);
            let feeding: Vec<bool> =
                (0..count).map(|k| spaces::code_has_edge(i, n, k, j)).collect();
            let best_feeding = tape.masked_max(p, feeding)?;
            let best_overall = tape.masked_max(p, vec![true; count])?;
            let ratio = tape.div(best_feeding, best_overall)?;
            let factor = tape.sub(one, ratio)?;
            term = Some(match term {
                None => factor,
                Some(t) => tape.mul(t, factor)?,
            });
        }
        let term = term.expect("every intermediate node has predecessors");
        total = Some(match total {
            None => term,
            Some(t) => tape.add(t, term)?,
        });
    }
    total.ok_or_else(|| AdError::contract("cell has no intermediate nodes"))
}

/// task_loss + lambda * r(beta); exactly task_loss when r is 0 or lambda is 0.
pub fn loss_with_regularizer(
    tape: &mut Tape,
    task_loss: Val,
    n: usize,
    beta: &BTreeMap<usize, Val>,
    lambda: f64,
) -> AdResult<Val> {
    let r = regularizer(tape, n, beta)?;
    let scaled = tape.smul(r, lambda)?;
    tape.add(task_loss, scaled)
}
