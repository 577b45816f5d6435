//! Stacked supernet: stem, preprocessed two-input cells, classifier head.
//!
//! Weights are per layer; operation scores and topology scores are shared
//! across all layers of the same cell kind. All learnables live in one
//! flat name-keyed store so optimizers, checkpoints, and flattening for
//! finite differences can treat them uniformly. Name scheme:
//!
//!   w.stem.conv, w.stem.bn.g, w.stem.bn.b
//!   w.c{k}.p0.conv, w.c{k}.p0.bn.g, ... (p1 likewise)
//!   w.c{k}.e{i}-{j}.{op}.{suffix}
//!   w.fc.w, w.fc.b
//!   a.{kind}.e{i}-{j}
//!   b.{kind}.n{node}

use std::collections::{BTreeMap, BTreeSet};

use stretchnas_autodiff::rng::Rng;
use stretchnas_autodiff::{Error as AdError, Result as AdResult, Tape, Tensor, Val};

use super::cell::{cell_forward, CellOnTape, CellSpec};
use super::ops::{init_param, CellOp};
use crate::error::{Error, Result};
use crate::topology::merge::{self, MergedFactors};
use crate::topology::vars::{TopologyMode, TopologyVariables};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum CellKind {
    Normal,
    Reduction,
}

impl CellKind {
    pub fn name(self) -> &'static str {
        match self {
            CellKind::Normal => "normal",
            CellKind::Reduction => "reduction",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupernetConfig {
    pub n_nodes: usize,
    pub layers: usize,
    pub init_channels: usize,
    pub in_channels: usize,
    pub image_size: usize,
    pub n_classes: usize,
    pub mode: TopologyMode,
    pub ops: Vec<CellOp>,
    /// Fixed-topology comparison network: unit factors, no topology
    /// variables, op set may include `zero`.
    pub baseline: bool,
    pub bn_eps: f64,
}

/// Static shape of one layer of the stack.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerPlan {
    pub kind: CellKind,
    pub channels: usize,
    /// Spatial extent of this cell's output maps.
    pub spatial: usize,
}

impl SupernetConfig {
    pub fn reduction_positions(&self) -> BTreeSet<usize> {
        [self.layers / 3, 2 * self.layers / 3].into_iter().collect()
    }

    pub fn layer_plans(&self) -> Vec<LayerPlan> {
        let red = self.reduction_positions();
        let mut channels = self.init_channels;
        let mut spatial = self.image_size;
        (0..self.layers)
            .map(|k| {
                let kind = if red.contains(&k) {
                    channels *= 2;
                    spatial = spatial.div_ceil(2);
                    CellKind::Reduction
                } else {
                    CellKind::Normal
                };
                LayerPlan {
                    kind,
                    channels,
                    spatial,
                }
            })
            .collect()
    }

    /// Cell kinds instantiated somewhere in the stack.
    pub fn instantiated_kinds(&self) -> BTreeSet<CellKind> {
        self.layer_plans().into_iter().map(|p| p.kind).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_nodes < 4 {
            return Err(Error::config("n_nodes must be at least 4"));
        }
        if self.layers == 0 {
            return Err(Error::config("layers must be at least 1"));
        }
        if self.init_channels == 0 || self.in_channels == 0 {
            return Err(Error::config("channel counts must be positive"));
        }
        if self.n_classes < 2 {
            return Err(Error::config("n_classes must be at least 2"));
        }
        if self.ops.is_empty() {
            return Err(Error::config("candidate op set is empty"));
        }
        let mut seen = BTreeSet::new();
        for &op in &self.ops {
            if !seen.insert(op) {
                return Err(Error::config(format!("duplicate op '{}'", op.name())));
            }
        }
        if !self.baseline && self.ops.contains(&CellOp::Zero) {
            return Err(Error::config(
                "the searchable op set must not contain 'zero'; topology is learned instead",
            ));
        }
        if self.baseline && !self.ops.contains(&CellOp::Zero) {
            return Err(Error::config("the baseline op set must contain 'zero'"));
        }
        let final_spatial = self
            .layer_plans()
            .last()
            .map(|p| p.spatial)
            .unwrap_or(self.image_size);
        if final_spatial == 0 {
            return Err(Error::config(format!(
                "image_size {} collapses to nothing after reductions",
                self.image_size
            )));
        }
        Ok(())
    }
}

/// Flat name-keyed parameter store with deterministic iteration order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore {
    map: BTreeMap<String, Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) {
        self.map.insert(name.into(), t);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.map.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.map.get_mut(name)
    }

    pub fn expect(&self, name: &str) -> AdResult<&Tensor> {
        self.map
            .get(name)
            .ok_or_else(|| AdError::contract(format!("no parameter named '{name}'")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.map.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.map.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.map.keys()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Total scalar count across all parameters.
    pub fn numel(&self) -> usize {
        self.map.values().map(|t| t.numel()).sum()
    }

    /// Concatenate every parameter in name order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.numel());
        for t in self.map.values() {
            out.extend_from_slice(t.data());
        }
        out
    }

    /// Inverse of [`flatten`]: load values back in name order.
    pub fn load_flat(&mut self, data: &[f64]) -> Result<()> {
        if data.len() != self.numel() {
            return Err(Error::config(format!(
                "flat load needs {} values, got {}",
                self.numel(),
                data.len()
            )));
        }
        let mut at = 0;
        for t in self.map.values_mut() {
            let n = t.numel();
            t.data_mut().copy_from_slice(&data[at..at + n]);
            at += n;
        }
        Ok(())
    }
}

pub struct Supernet {
    pub config: SupernetConfig,
    pub params: ParamStore,
}

fn edge_name(prefix: &str, i: usize, j: usize) -> String {
    format!("{prefix}.e{i}-{j}")
}

impl Supernet {
    /// Deterministic initialization: every parameter draws from an RNG
    /// stream derived from (seed, its own name).
    pub fn init(config: SupernetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut params = ParamStore::new();
        let mut add = |name: String, suffix: &str, shape: Vec<usize>| {
            let mut rng = Rng::derive(seed, &name, 0);
            let t = init_param(suffix, &shape, &mut rng);
            params.insert(name, t);
        };

        let c0 = config.init_channels;
        add(
            "w.stem.conv".into(),
            "conv",
            vec![c0, config.in_channels, 3, 3],
        );
        add("w.stem.bn.g".into(), "bn.g", vec![c0]);
        add("w.stem.bn.b".into(), "bn.b", vec![c0]);

        let n = config.n_nodes;
        let (mut c_pp, mut c_p) = (c0, c0);
        for (k, plan) in config.layer_plans().iter().enumerate() {
            let c = plan.channels;
            add(format!("w.c{k}.p0.conv"), "conv", vec![c, c_pp, 1, 1]);
            add(format!("w.c{k}.p0.bn.g"), "bn.g", vec![c]);
            add(format!("w.c{k}.p0.bn.b"), "bn.b", vec![c]);
            add(format!("w.c{k}.p1.conv"), "conv", vec![c, c_p, 1, 1]);
            add(format!("w.c{k}.p1.bn.g"), "bn.g", vec![c]);
            add(format!("w.c{k}.p1.bn.b"), "bn.b", vec![c]);
            for (i, j) in merge::cell_edges(n) {
                for &op in &config.ops {
                    for (suffix, shape) in op.param_shapes(c) {
                        add(
                            format!("w.c{k}.e{i}-{j}.{}.{suffix}", op.name()),
                            suffix,
                            shape,
                        );
                    }
                }
            }
            c_pp = c_p;
            c_p = (n - 2) * c;
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
                    .unwrap()
                    .with_grad(),
            );
            params.insert(
                "w.fc.b",
                Tensor::zeros(&[config.n_classes]).with_grad(),
            );
        }

        for kind in [CellKind::Normal, CellKind::Reduction] {
            for (i, j) in merge::cell_edges(n) {
                params.insert(
                    edge_name(&format!("a.{}", kind.name()), i, j),
                    Tensor::zeros(&[config.ops.len()]).with_grad(),
                );
            }
            if !config.baseline {
                for node in config.mode.scored_nodes(n) {
                    params.insert(
                        format!("b.{}.n{node}", kind.name()),
                        Tensor::zeros(&[config.mode.space_len(node, n)]).with_grad(),
                    );
                }
            }
        }

        Ok(Supernet { config, params })
    }

    /// Copy the stored topology scores of one cell kind.
    pub fn topology_vars(&self, kind: CellKind) -> Result<TopologyVariables> {
        if self.config.baseline {
            return Err(Error::config(
                "baseline networks carry no topology variables",
            ));
        }
        let mut vars = TopologyVariables::zeros(self.config.mode, self.config.n_nodes);
        for node in self.config.mode.scored_nodes(self.config.n_nodes) {
            let t = self
                .params
                .expect(&format!("b.{}.n{node}", kind.name()))
                .map_err(Error::from)?;
            vars.set_beta(node, t.clone())?;
        }
        Ok(vars)
    }

    /// Copy the stored operation scores of one cell kind.
    pub fn alpha_vars(&self, kind: CellKind) -> BTreeMap<(usize, usize), Tensor> {
        merge::cell_edges(self.config.n_nodes)
            .into_iter()
            .map(|(i, j)| {
                let name = edge_name(&format!("a.{}", kind.name()), i, j);
                ((i, j), self.params.get(&name).unwrap().clone())
            })
            .collect()
    }

    /// Put every parameter on a tape.
    pub fn leaf_params(&self, tape: &mut Tape) -> AdResult<LeafedParams> {
        LeafedParams::from_store(tape, &self.params)
    }

    fn factors_for(
        &self,
        tape: &mut Tape,
        params: &LeafedParams,
        kind: CellKind,
    ) -> AdResult<MergedFactors> {
        if self.config.baseline {
            MergedFactors::unit(tape, self.config.n_nodes)
        } else {
            let beta = params.beta_vals(kind, &self.config);
            merge::merged_factors(tape, self.config.mode, self.config.n_nodes, &beta)
        }
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

    /// Logits for a batch already on the tape (shape [B, C_in, S, S]).
    pub fn forward_from(
        &self,
        tape: &mut Tape,
        params: &LeafedParams,
        x: Val,
    ) -> AdResult<Val> {
        let stem_conv = params.get("w.stem.conv")?;
        let stem_g = params.get("w.stem.bn.g")?;
        let stem_b = params.get("w.stem.bn.b")?;
        let s = tape.conv2d(x, stem_conv, 1, 1, 1, 1)?;
        let stem = tape.channel_norm(s, stem_g, stem_b, self.config.bn_eps)?;

        let kinds = self.config.instantiated_kinds();
        let mut factors: BTreeMap<CellKind, MergedFactors> = BTreeMap::new();
        for &kind in &kinds {
            factors.insert(kind, self.factors_for(tape, params, kind)?);
        }

        let n = self.config.n_nodes;
        let (mut s0, mut s1) = (stem, stem);
        let (mut sp0, mut sp1) = (self.config.image_size, self.config.image_size);
        for (k, plan) in self.config.layer_plans().iter().enumerate() {
            let stride0 = if sp0 != sp1 { 2 } else { 1 };
            let x0 = self.preprocess(tape, params, k, 0, s0, stride0)?;
            let x1 = self.preprocess(tape, params, k, 1, s1, 1)?;
            let cell = CellOnTape {
                spec: CellSpec {
                    n_nodes: n,
                    ops: self.config.ops.clone(),
                    reduction: plan.kind == CellKind::Reduction,
                },
                alpha: params.edge_alpha(plan.kind, &self.config),
                edge_params: params.edge_params_for_cell(k, &self.config),
                bn_eps: self.config.bn_eps,
            };
            let y = cell_forward(tape, &cell, x0, x1, &factors[&plan.kind])?;
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

    pub fn forward(
        &self,
        tape: &mut Tape,
        params: &LeafedParams,
        images: &Tensor,
    ) -> AdResult<Val> {
        let x = tape.constant(images.clone())?;
        self.forward_from(tape, params, x)
    }

    /// Mean cross-entropy of a labeled batch.
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

    /// Sum of the starvation penalties of all instantiated-or-not cell
    /// kinds; None outside Arbitrary mode and for baselines.
    pub fn topology_penalty(
        &self,
        tape: &mut Tape,
        params: &LeafedParams,
    ) -> AdResult<Option<Val>> {
        if self.config.baseline || self.config.mode != TopologyMode::Arbitrary {
            return Ok(None);
        }
        let mut total: Option<Val> = None;
        for kind in [CellKind::Normal, CellKind::Reduction] {
            let beta = params.beta_vals(kind, &self.config);
            let r = crate::topology::regularizer::regularizer(tape, self.config.n_nodes, &beta)?;
            total = Some(match total {
                None => r,
                Some(t) => tape.add(t, r)?,
            });
        }
        Ok(total)
    }
}

/// Tape handles for every parameter, keyed by store name.
pub struct LeafedParams {
    pub vals: BTreeMap<String, Val>,
}

impl LeafedParams {
    /// Leaf every tensor of a store onto the tape, keyed by name.
    pub fn from_store(tape: &mut Tape, store: &ParamStore) -> AdResult<Self> {
        let mut vals = BTreeMap::new();
        for (name, t) in store.iter() {
            vals.insert(name.clone(), tape.leaf(t.clone())?);
        }
        Ok(LeafedParams { vals })
    }

    pub fn get(&self, name: &str) -> AdResult<Val> {
        self.vals
            .get(name)
            .copied()
            .ok_or_else(|| AdError::contract(format!("no tape value for parameter '{name}'")))
    }

    pub fn beta_vals(&self, kind: CellKind, config: &SupernetConfig) -> BTreeMap<usize, Val> {
        config
            .mode
            .scored_nodes(config.n_nodes)
            .into_iter()
            .filter_map(|node| {
                self.vals
                    .get(&format!("b.{}.n{node}", kind.name()))
                    .map(|&v| (node, v))
            })
            .collect()
    }

    pub fn edge_alpha(
        &self,
        kind: CellKind,
        config: &SupernetConfig,
    ) -> BTreeMap<(usize, usize), Val> {
        merge::cell_edges(config.n_nodes)
            .into_iter()
            .filter_map(|(i, j)| {
                self.vals
                    .get(&edge_name(&format!("a.{}", kind.name()), i, j))
                    .map(|&v| ((i, j), v))
            })
            .collect()
    }

    /// Per-edge op parameters of cell `k`, keyed "{op}.{suffix}".
    pub fn edge_params_for_cell(
        &self,
        k: usize,
        config: &SupernetConfig,
    ) -> BTreeMap<(usize, usize), BTreeMap<String, Val>> {
        let mut out = BTreeMap::new();
        for (i, j) in merge::cell_edges(config.n_nodes) {
            let mut per_edge = BTreeMap::new();
            for &op in &config.ops {
                for (suffix, _) in op.param_shapes(1) {
                    let name = format!("w.c{k}.e{i}-{j}.{}.{suffix}", op.name());
                    if let Some(&v) = self.vals.get(&name) {
                        per_edge.insert(format!("{}.{suffix}", op.name()), v);
                    }
                }
            }
            out.insert((i, j), per_edge);
        }
        out
    }
}
