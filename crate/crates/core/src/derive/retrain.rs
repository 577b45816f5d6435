//! Training a decoded architecture from scratch and measuring it.
//!
//! The evaluation network keeps the supernet's stem, preprocessing, and
//! classifier scheme but instantiates only the kept edges, each with its
//! single decoded operation, and concatenates only the kept intermediate
//! nodes. Weights are fresh; nothing is inherited from the search.

use std::collections::BTreeMap;

use stretchnas_autodiff::rng::Rng;
use stretchnas_autodiff::{Result as AdResult, Tape, Tensor, Val};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::optim::{cosine_lr, sgd_update, SgdHyper};
use crate::search_space::ops::{apply_op, init_param};
use crate::search_space::{
    count_params_flops, CellKind, CountReport, LeafedParams, ParamStore, SupernetConfig,
};

use super::depth::cell_depth;
use super::validate::validate;
use super::DerivedArchitecture;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetrainHyper {
    pub epochs: usize,
    pub batch_size: usize,
    /// Base learning rate; cosine-annealed per epoch.
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

impl RetrainHyper {
    pub fn default_desk() -> Self {
        RetrainHyper {
            epochs: 20,
            batch_size: 16,
            lr: 0.025,
            momentum: 0.9,
            weight_decay: 3e-4,
        }
    }
}

/// What a retraining run produced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetrainReport {
    pub train_accuracy: f64,
    pub eval_accuracy: f64,
    pub count: CountReport,
    pub depth_normal: usize,
    pub depth_reduction: usize,
    pub epochs: usize,
}

/// A discrete architecture instantiated as a trainable network.
pub struct EvalNet {
    pub config: SupernetConfig,
    pub arch: DerivedArchitecture,
    pub params: ParamStore,
}

impl EvalNet {
    /// Fresh deterministic weights for the kept structure. Rejects invalid
    /// cells of every kind the layer plan instantiates.
    pub fn init(arch: &DerivedArchitecture, config: &SupernetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        arch.check()?;
        if arch.normal.n_nodes != config.n_nodes {
            return Err(Error::config(format!(
                "architecture has {} nodes but the network is configured for {}",
                arch.normal.n_nodes, config.n_nodes
            )));
        }
        for kind in config.instantiated_kinds() {
            let report = validate(arch.cell(kind));
            if !report.valid {
                return Err(Error::config(format!(
                    "{} cell is not instantiable: starved {:?}, empty {}",
                    kind.name(),
                    report.starved,
                    report.empty
                )));
            }
        }

        let mut params = ParamStore::new();
        let mut add = |name: String, suffix: &str, shape: Vec<usize>| {
            let mut rng = Rng::derive(seed, &name, 0);
            let t = init_param(suffix, &shape, &mut rng);
            params.insert(name, t);
        };

        let c0 = config.init_channels;
        add("w.stem.conv".into(), "conv", vec![c0, config.in_channels, 3, 3]);
        add("w.stem.bn.g".into(), "bn.g", vec![c0]);
        add("w.stem.bn.b".into(), "bn.b", vec![c0]);

        let (mut c_pp, mut c_p) = (c0, c0);
        for (k, plan) in config.layer_plans().iter().enumerate() {
            let c = plan.channels;
            let cell = arch.cell(plan.kind);
            add(format!("w.c{k}.p0.conv"), "conv", vec![c, c_pp, 1, 1]);
            add(format!("w.c{k}.p0.bn.g"), "bn.g", vec![c]);
            add(format!("w.c{k}.p0.bn.b"), "bn.b", vec![c]);
            add(format!("w.c{k}.p1.conv"), "conv", vec![c, c_p, 1, 1]);
            add(format!("w.c{k}.p1.bn.g"), "bn.g", vec![c]);
            add(format!("w.c{k}.p1.bn.b"), "bn.b", vec![c]);
            for (&(i, j), op) in &cell.edges {
                for (suffix, shape) in op.param_shapes(c) {
                    add(
                        format!("w.c{k}.e{i}-{j}.{}.{suffix}", op.name()),
                        suffix,
                        shape,
                    );
                }
            }
            c_pp = c_p;
            c_p = cell.kept_intermediates().len() * c;
        }

        {
            let name = "w.fc.w".to_string();
            let mut rng = Rng::derive(seed, &name, 0);
            let std = (1.0 / c_p as f64).sqrt();
            let data: Vec<f64> = (0..c_p * config.n_classes)
                .map(|_| rng.normal_scaled(std))
                .collect();
            params.insert(
                name,
                Tensor::new(vec![c_p, config.n_classes], data)
                    .expect("fc shape")
                    .with_grad(),
            );
            params.insert("w.fc.b", Tensor::zeros(&[config.n_classes]).with_grad());
        }

        Ok(EvalNet {
            config: config.clone(),
            arch: arch.clone(),
            params,
        })
    }

    pub fn leaf_params(&self, tape: &mut Tape) -> AdResult<LeafedParams> {
        LeafedParams::from_store(tape, &self.params)
    }

    fn preprocess(
        &self,
        tape: &mut Tape,
        params: &LeafedParams,
        k: usize,
        which: usize,
        x: Val,
        stride: usize,
    ) -> AdResult<Val> {
        let conv = params.get(&format!("w.c{k}.p{which}.conv"))?;
        let g = params.get(&format!("w.c{k}.p{which}.bn.g"))?;
        let b = params.get(&format!("w.c{k}.p{which}.bn.b"))?;
        let r = tape.relu(x)?;
        let y = tape.conv2d(r, conv, stride, 0, 1, 1)?;
        tape.channel_norm(y, g, b, self.config.bn_eps)
    }

    pub fn forward_from(&self, tape: &mut Tape, params: &LeafedParams, x: Val) -> AdResult<Val> {
        let stem_conv = params.get("w.stem.conv")?;
        let stem_g = params.get("w.stem.bn.g")?;
        let stem_b = params.get("w.stem.bn.b")?;
        let s = tape.conv2d(x, stem_conv, 1, 1, 1, 1)?;
        let stem = tape.channel_norm(s, stem_g, stem_b, self.config.bn_eps)?;

        let (mut s0, mut s1) = (stem, stem);
        let (mut sp0, mut sp1) = (self.config.image_size, self.config.image_size);
        for (k, plan) in self.config.layer_plans().iter().enumerate() {
            let cell = self.arch.cell(plan.kind);
            let reduction = plan.kind == CellKind::Reduction;
            let stride0 = if sp0 != sp1 { 2 } else { 1 };
            let x0 = self.preprocess(tape, params, k, 0, s0, stride0)?;
            let x1 = self.preprocess(tape, params, k, 1, s1, 1)?;
            let mut nodes: BTreeMap<usize, Val> = BTreeMap::new();
            nodes.insert(1, x0);
            nodes.insert(2, x1);
            for j in cell.kept_intermediates() {
                let mut acc: Option<Val> = None;
                for (i, _) in cell.in_edges(j) {
                    let op = cell.edges[&(i, j)];
                    let stride = if reduction && i <= 2 { 2 } else { 1 };
                    let mut op_params: BTreeMap<String, Val> = BTreeMap::new();
                    for (suffix, _) in op.param_shapes(1) {
                        let name = format!("w.c{k}.e{i}-{j}.{}.{suffix}", op.name());
                        op_params.insert(suffix.to_string(), params.get(&name)?);
                    }
                    let y = apply_op(tape, op, nodes[&i], stride, &op_params, self.config.bn_eps)?;
                    acc = Some(match acc {
                        None => y,
                        Some(a) => tape.add(a, y)?,
                    });
                }
                nodes.insert(j, acc.expect("validated cell has no starved node"));
            }
            let kept: Vec<Val> = cell
                .kept_intermediates()
                .into_iter()
                .map(|j| nodes[&j])
                .collect();
            let y = tape.concat_channels(&kept)?;
            s0 = s1;
            s1 = y;
            sp0 = sp1;
            sp1 = plan.spatial;
        }

        let pooled = tape.global_avg_pool(s1)?;
        let fc_w = params.get("w.fc.w")?;
        let fc_b = params.get("w.fc.b")?;
        let logits = tape.matmul(pooled, fc_w)?;
        tape.bias_add(logits, fc_b)
    }

    pub fn forward(&self, tape: &mut Tape, params: &LeafedParams, images: &Tensor) -> AdResult<Val> {
        let x = tape.constant(images.clone())?;
        self.forward_from(tape, params, x)
    }

    pub fn task_loss(
        &self,
        tape: &mut Tape,
        params: &LeafedParams,
        images: &Tensor,
        labels: &[usize],
    ) -> AdResult<Val> {
        let logits = self.forward(tape, params, images)?;
        tape.cross_entropy(logits, labels.to_vec())
    }

    /// Fraction of samples whose argmax logit matches the label; prediction
    /// ties resolve to the lowest class index.
    pub fn accuracy(&self, data: &Dataset, batch_size: usize) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::data("cannot score an empty dataset"));
        }
        let indices: Vec<usize> = (0..data.len()).collect();
        let mut hits = 0usize;
        for chunk in indices.chunks(batch_size.max(1)) {
            let (images, labels) = data.batch(chunk)?;
            let mut tape = Tape::new();
            let params = self.leaf_params(&mut tape)?;
            let logits = self.forward(&mut tape, &params, &images)?;
            let out = tape.value(logits);
            let classes = out.shape()[1];
            for (row, &label) in labels.iter().enumerate() {
                let scores = &out.data()[row * classes..(row + 1) * classes];
                let mut best = 0;
                for (idx, &s) in scores.iter().enumerate().skip(1) {
                    if s > scores[best] {
                        best = idx;
                    }
                }
                if best == label {
                    hits += 1;
                }
            }
        }
        Ok(hits as f64 / data.len() as f64)
    }
}

/// Full measurement pipeline: fresh weights, SGD with momentum under a
/// cosine schedule, then accuracy on both splits plus size and depth
/// numbers. Deterministic for a fixed seed.
pub fn retrain_from_scratch(
    arch: &DerivedArchitecture,
    config: &SupernetConfig,
    train: &Dataset,
    eval: &Dataset,
    hyper: &RetrainHyper,
    seed: u64,
) -> Result<(EvalNet, RetrainReport)> {
    if hyper.batch_size == 0 {
        return Err(Error::config("batch_size must be positive"));
    }
    if hyper.lr <= 0.0 || !hyper.lr.is_finite() {
        return Err(Error::config(format!("lr must be positive, got {}", hyper.lr)));
    }
    let mut net = EvalNet::init(arch, config, seed)?;
    let mut vel: BTreeMap<String, Tensor> = net
        .params
        .iter()
        .map(|(name, t)| (name.clone(), Tensor::zeros(t.shape())))
        .collect();

    for epoch in 0..hyper.epochs {
        let lr_now = cosine_lr(hyper.lr, epoch, hyper.epochs);
        let hp = SgdHyper {
            lr: lr_now,
            momentum: hyper.momentum,
            weight_decay: hyper.weight_decay,
        };
        let mut indices: Vec<usize> = (0..train.len()).collect();
        let mut rng = Rng::derive(seed, "retrain-shuffle", epoch as u64);
        rng.shuffle(&mut indices);
        for chunk in indices.chunks(hyper.batch_size) {
            let (images, labels) = train.batch(chunk)?;
            let mut tape = Tape::new();
            let params = net.leaf_params(&mut tape)?;
            let loss = net.task_loss(&mut tape, &params, &images, &labels)?;
            let grads = tape.backward(loss)?;
            let mut updates: Vec<(String, Tensor)> = Vec::new();
            for (name, &val) in &params.vals {
                let g = match grads.wrt(val) {
                    Some(t) => t.clone(),
                    None => continue,
                };
                if !g.is_finite() {
                    return Err(Error::from(stretchnas_autodiff::Error::numeric(format!(
                        "non-finite gradient for '{name}'"
                    ))));
                }
                updates.push((name.clone(), g));
            }
            drop(tape);
            for (name, g) in &updates {
                let v = vel.get_mut(name).expect("velocity");
                let p = net.params.get_mut(name).expect("param");
                sgd_update(p, g, v, &hp);
            }
        }
    }

    let train_accuracy = net.accuracy(train, hyper.batch_size)?;
    let eval_accuracy = net.accuracy(eval, hyper.batch_size)?;
    let count = count_params_flops(arch, config)?;
    let report = RetrainReport {
        train_accuracy,
        eval_accuracy,
        count,
        depth_normal: cell_depth(&arch.normal),
        depth_reduction: cell_depth(&arch.reduction),
        epochs: hyper.epochs,
    };
    Ok((net, report))
}
