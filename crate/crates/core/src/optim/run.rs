//! The epoch loop: batching, stepping, per-epoch metrics, and checkpoints.

use std::path::Path;

use stretchnas_autodiff::rng::Rng;
use stretchnas_autodiff::Tape;

use crate::data::Dataset;
use crate::derive::{decode_topology, top2_decode};
use crate::error::{Error, Result};
use crate::search_space::CellKind;

use super::checkpoint::save_checkpoint;
use super::split::SplitDatasets;
use super::state::{OptimizerMode, SearchHyper, SearchState};
use super::step::{darts_step, milenas_step};
use super::updates::cosine_lr;

/// One CSV row of the metrics log.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub l_tr: f64,
    pub l_val: f64,
    pub r_beta: f64,
    pub beta_entropy_mean: f64,
    pub decoded_edge_count: usize,
}

pub fn metrics_csv(metrics: &[EpochMetrics]) -> String {
    let mut out = String::from("epoch,l_tr,l_val,r_beta,beta_entropy_mean,decoded_edge_count\n");
    for m in metrics {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            m.epoch, m.l_tr, m.l_val, m.r_beta, m.beta_entropy_mean, m.decoded_edge_count
        ));
    }
    out
}

pub fn write_metrics_csv(path: &Path, metrics: &[EpochMetrics]) -> Result<()> {
    std::fs::write(path, metrics_csv(metrics))?;
    Ok(())
}

fn shuffled(n: usize, seed: u64, purpose: &str, epoch: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = Rng::derive(seed, purpose, epoch as u64);
    rng.shuffle(&mut idx);
    idx
}

fn entropy_nats(scores: &[f64]) -> f64 {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|&s| (s - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    -exps
        .iter()
        .map(|&e| {
            let p = e / sum;
            if p > 0.0 {
                p * p.ln()
            } else {
                0.0
            }
        })
        .sum::<f64>()
}

/// Score-only observations at the end of an epoch: current penalty value,
/// mean topology-score entropy, and the edge count a decode would keep.
pub fn score_snapshot(state: &SearchState) -> Result<(f64, f64, usize)> {
    let net = &state.net;
    let r_beta = {
        let mut tape = Tape::new();
        let params = net.leaf_params(&mut tape)?;
        match net.topology_penalty(&mut tape, &params)? {
            Some(r) => tape.item(r)?,
            None => 0.0,
        }
    };
    let mut entropy_sum = 0.0;
    let mut entropy_count = 0usize;
    let mut edges = 0usize;
    for kind in [CellKind::Normal, CellKind::Reduction] {
        if net.config.baseline {
            let cell = top2_decode(
                &net.alpha_vars(kind),
                net.config.n_nodes,
                &net.config.ops,
                kind,
            )?;
            edges += cell.edges.len();
        } else {
            let vars = net.topology_vars(kind)?;
            let nodes: Vec<usize> = vars.nodes().collect();
            for node in nodes {
                let scores = vars
                    .beta(node)
                    .ok_or_else(|| Error::config(format!("no topology scores for node {node}")))?;
                entropy_sum += entropy_nats(scores.data());
                entropy_count += 1;
            }
            edges += decode_topology(&vars)?.edges.len();
        }
    }
    let entropy_mean = if entropy_count == 0 {
        0.0
    } else {
        entropy_sum / entropy_count as f64
    };
    Ok((r_beta, entropy_mean, edges))
}

/// Runs epochs `state.epoch .. hyper.epochs`. Per epoch: cosine-annealed
/// weight learning rate, freshly shuffled batch order, one step per training
/// batch with validation batches cycling, then metrics, a checkpoint (when a
/// path is given), and the callback. A numerically failed step aborts after
/// writing a final checkpoint of the untouched state.
pub fn search_loop(
    state: &mut SearchState,
    splits: &SplitDatasets,
    hyper: &SearchHyper,
    checkpoint_path: Option<&Path>,
    config_text: &str,
    on_epoch: &mut dyn FnMut(&EpochMetrics),
) -> Result<Vec<EpochMetrics>> {
    hyper.validate()?;
    for (part, name) in [
        (&splits.train, "training"),
        (&splits.val_alpha, "first validation"),
        (&splits.val_beta, "second validation"),
    ] {
        if part.is_empty() {
            return Err(Error::data(format!("{name} split is empty")));
        }
    }
    let combined_val = match hyper.optimizer {
        OptimizerMode::Darts => Some(Dataset::concat(&splits.val_alpha, &splits.val_beta)?),
        OptimizerMode::Milenas => None,
    };
    let seed = state.seed;
    let mut collected = Vec::new();
    while state.epoch < hyper.epochs {
        let epoch = state.epoch;
        let lr_now = cosine_lr(hyper.lr_w, epoch, hyper.epochs);
        let train_idx = shuffled(splits.train.len(), seed, "epoch-shuffle-train", epoch);
        let train_chunks: Vec<&[usize]> = train_idx.chunks(hyper.batch_size).collect();
        let mut sum_tr = 0.0;
        let mut sum_val = 0.0;

        let fail_checkpoint = |state: &SearchState, err: Error| -> Error {
            if err.is_numeric() {
                if let Some(path) = checkpoint_path {
                    let _ = save_checkpoint(path, state, config_text);
                }
            }
            err
        };

        match hyper.optimizer {
            OptimizerMode::Darts => {
                let val_ds = combined_val.as_ref().expect("combined validation stream");
                let val_idx = shuffled(val_ds.len(), seed, "epoch-shuffle-val", epoch);
                let val_chunks: Vec<&[usize]> = val_idx.chunks(hyper.batch_size).collect();
                for (step_idx, chunk) in train_chunks.iter().enumerate() {
                    let (ti, tl) = splits.train.batch(chunk)?;
                    let (vi, vl) = val_ds.batch(val_chunks[step_idx % val_chunks.len()])?;
                    let stats = darts_step(state, hyper, lr_now, (&ti, &tl), (&vi, &vl))
                        .map_err(|e| fail_checkpoint(state, e))?;
                    sum_tr += stats.l_tr;
                    sum_val += stats.l_val;
                }
            }
            OptimizerMode::Milenas => {
                let va_idx = shuffled(splits.val_alpha.len(), seed, "epoch-shuffle-val-alpha", epoch);
                let vb_idx = shuffled(splits.val_beta.len(), seed, "epoch-shuffle-val-beta", epoch);
                let va_chunks: Vec<&[usize]> = va_idx.chunks(hyper.batch_size).collect();
                let vb_chunks: Vec<&[usize]> = vb_idx.chunks(hyper.batch_size).collect();
                for (step_idx, chunk) in train_chunks.iter().enumerate() {
                    let (ti, tl) = splits.train.batch(chunk)?;
                    let (vai, val_) = splits
                        .val_alpha
                        .batch(va_chunks[step_idx % va_chunks.len()])?;
                    let (vbi, vbl) = splits
                        .val_beta
                        .batch(vb_chunks[step_idx % vb_chunks.len()])?;
                    let stats = milenas_step(
                        state,
                        hyper,
                        lr_now,
                        (&ti, &tl),
                        (&vai, &val_),
                        (&vbi, &vbl),
                    )
                    .map_err(|e| fail_checkpoint(state, e))?;
                    sum_tr += stats.l_tr;
                    sum_val += stats.l_val;
                }
            }
        }

        let steps = train_chunks.len() as f64;
        let (r_beta, beta_entropy_mean, decoded_edge_count) = score_snapshot(state)?;
        let metrics = EpochMetrics {
            epoch,
            l_tr: sum_tr / steps,
            l_val: sum_val / steps,
            r_beta,
            beta_entropy_mean,
            decoded_edge_count,
        };
        state.epoch = epoch + 1;
        if let Some(path) = checkpoint_path {
            save_checkpoint(path, state, config_text)?;
        }
        on_epoch(&metrics);
        collected.push(metrics);
    }
    Ok(collected)
}
