//! One optimization step of either bi-level rule.
//!
//! Steps are transactional: every gradient is computed and checked finite
//! before any parameter moves, and a failure in the weight half rolls the
//! already-applied architecture half back, so a failed step leaves the state
//! exactly as it found it.

use std::collections::BTreeMap;

use stretchnas_autodiff::{Error as AdError, Gradients, Tape, Tensor, Val};

use crate::error::{Error, Result};
use crate::search_space::ParamStore;

use super::state::{is_arch_param, SearchHyper, SearchState};
use super::updates::{adam_update, sgd_update, AdamHyper, SgdHyper};

/// Loss values observed during one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    pub l_tr: f64,
    pub l_val: f64,
}

/// Pulls gradients for every parameter passing `filter`, substituting zeros
/// for parameters off the graph, and rejects non-finite values before any
/// state mutation can happen.
fn gather(
    grads: &Gradients,
    leafed: &BTreeMap<String, Val>,
    store: &ParamStore,
    filter: impl Fn(&str) -> bool,
) -> Result<BTreeMap<String, Tensor>> {
    let mut out = BTreeMap::new();
    for (name, &val) in leafed {
        if !filter(name) {
            continue;
        }
        let g = match grads.wrt(val) {
            Some(t) => t.clone(),
            None => Tensor::zeros(store.get(name).expect("leafed name in store").shape()),
        };
        if !g.is_finite() {
            return Err(Error::from(AdError::numeric(format!(
                "non-finite gradient for '{name}'"
            ))));
        }
        out.insert(name.clone(), g);
    }
    Ok(out)
}

struct ArchSnapshot {
    adam_t: u64,
    entries: Vec<(String, Tensor, Tensor, Tensor)>,
}

fn snapshot_arch(state: &SearchState) -> ArchSnapshot {
    let entries = state
        .adam_m
        .keys()
        .map(|name| {
            (
                name.clone(),
                state.net.params.get(name).expect("arch param").clone(),
                state.adam_m[name].clone(),
                state.adam_v[name].clone(),
            )
        })
        .collect();
    ArchSnapshot {
        adam_t: state.adam_t,
        entries,
    }
}

fn restore_arch(state: &mut SearchState, snap: ArchSnapshot) {
    state.adam_t = snap.adam_t;
    for (name, p, m, v) in snap.entries {
        *state.net.params.get_mut(&name).expect("arch param") = p;
        state.adam_m.insert(name.clone(), m);
        state.adam_v.insert(name, v);
    }
}

fn apply_arch(state: &mut SearchState, grads: &BTreeMap<String, Tensor>, lr: f64) {
    state.adam_t += 1;
    let hp = AdamHyper::arch(lr);
    let t = state.adam_t;
    for (name, g) in grads {
        let m = state.adam_m.get_mut(name).expect("adam m");
        let v = state.adam_v.get_mut(name).expect("adam v");
        let p = state.net.params.get_mut(name).expect("arch param");
        adam_update(p, g, m, v, t, &hp);
    }
}

/// Training-loss descent on the network weights at the current (already
/// updated) architecture. Gradients are checked finite before any weight
/// moves.
fn weight_pass(
    state: &mut SearchState,
    hyper: &SearchHyper,
    lr_w_now: f64,
    images: &Tensor,
    labels: &[usize],
) -> Result<f64> {
    let mut tape = Tape::with_precision(hyper.precision);
    let params = state.net.leaf_params(&mut tape)?;
    let l_tr = state.net.task_loss(&mut tape, &params, images, labels)?;
    let value = tape.item(l_tr)?;
    let grads = tape.backward(l_tr)?;
    let w_grads = gather(&grads, &params.vals, &state.net.params, |n| !is_arch_param(n))?;
    let hp = SgdHyper {
        lr: lr_w_now,
        momentum: hyper.momentum_w,
        weight_decay: hyper.weight_decay_w,
    };
    for (name, g) in &w_grads {
        let vel = state.sgd_vel.get_mut(name).expect("velocity");
        let p = state.net.params.get_mut(name).expect("weight param");
        sgd_update(p, g, vel, &hp);
    }
    Ok(value)
}

/// Alternating first-order step: architecture scores descend the validation
/// loss plus the topology penalty, then the weights descend the training
/// loss at the updated architecture.
pub fn darts_step(
    state: &mut SearchState,
    hyper: &SearchHyper,
    lr_w_now: f64,
    train: (&Tensor, &[usize]),
    val: (&Tensor, &[usize]),
) -> Result<StepStats> {
    let mut tape = Tape::with_precision(hyper.precision);
    let params = state.net.leaf_params(&mut tape)?;
    let l_val = state.net.task_loss(&mut tape, &params, val.0, val.1)?;
    let loss = match state.net.topology_penalty(&mut tape, &params)? {
        Some(r) => {
            let rl = tape.smul(r, hyper.lambda)?;
            tape.add(l_val, rl)?
        }
        None => l_val,
    };
    let l_val_value = tape.item(l_val)?;
    let grads = tape.backward(loss)?;
    let arch_grads = gather(&grads, &params.vals, &state.net.params, is_arch_param)?;
    drop(tape);

    let snap = snapshot_arch(state);
    apply_arch(state, &arch_grads, hyper.lr_arch);
    match weight_pass(state, hyper, lr_w_now, train.0, train.1) {
        Ok(l_tr) => Ok(StepStats {
            l_tr,
            l_val: l_val_value,
        }),
        Err(e) => {
            restore_arch(state, snap);
            Err(e)
        }
    }
}

/// Mixed-level step: both score groups descend the training loss plus their
/// own weighted validation stream, the topology scores additionally feel the
/// starvation penalty; one tape serves all three forwards and both
/// backwards. Weights then descend the training loss at the updated
/// architecture.
pub fn milenas_step(
    state: &mut SearchState,
    hyper: &SearchHyper,
    lr_w_now: f64,
    train: (&Tensor, &[usize]),
    val_alpha: (&Tensor, &[usize]),
    val_beta: (&Tensor, &[usize]),
) -> Result<StepStats> {
    let lp = hyper
        .lambda_prime
        .ok_or_else(|| Error::config("the mixed-level optimizer needs lambda_prime"))?;
    let mut tape = Tape::with_precision(hyper.precision);
    let params = state.net.leaf_params(&mut tape)?;
    let l_tr = state.net.task_loss(&mut tape, &params, train.0, train.1)?;
    let l_va = state.net.task_loss(&mut tape, &params, val_alpha.0, val_alpha.1)?;
    let l_vb = state.net.task_loss(&mut tape, &params, val_beta.0, val_beta.1)?;
    let sa = tape.smul(l_va, lp)?;
    let loss_a = tape.add(l_tr, sa)?;
    let sb = tape.smul(l_vb, lp)?;
    let mut loss_b = tape.add(l_tr, sb)?;
    if let Some(r) = state.net.topology_penalty(&mut tape, &params)? {
        let rl = tape.smul(r, hyper.lambda)?;
        loss_b = tape.add(loss_b, rl)?;
    }
    let l_val_value = 0.5 * (tape.item(l_va)? + tape.item(l_vb)?);
    let ga = tape.backward(loss_a)?;
    let gb = tape.backward(loss_b)?;
    let mut arch_grads = gather(&ga, &params.vals, &state.net.params, |n| n.starts_with("a."))?;
    arch_grads.extend(gather(&gb, &params.vals, &state.net.params, |n| {
        n.starts_with("b.")
    })?);
    drop(tape);

    let snap = snapshot_arch(state);
    apply_arch(state, &arch_grads, hyper.lr_arch);
    match weight_pass(state, hyper, lr_w_now, train.0, train.1) {
        Ok(l_tr) => Ok(StepStats {
            l_tr,
            l_val: l_val_value,
        }),
        Err(e) => {
            restore_arch(state, snap);
            Err(e)
        }
    }
}
