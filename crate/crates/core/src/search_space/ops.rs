//! Candidate operations on cell edges.
//!
//! Every operation maps a feature map [B, C, H, W] to the same channel
//! count, at stride 1 or 2. The default candidate set deliberately has no
//! zero operation; `Zero` exists only for the fixed-topology baseline,
//! where edge pruning is expressed through operation choice instead.

use std::collections::BTreeMap;

use stretchnas_autodiff::rng::Rng;
use stretchnas_autodiff::{Error as AdError, Result as AdResult, Tape, Tensor, Val};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum CellOp {
    Identity,
    SepConv3x3,
    SepConv5x5,
    DilConv3x3,
    MaxPool3x3,
    AvgPool3x3,
    Conv3x3,
    Zero,
}

impl CellOp {
    pub fn name(self) -> &'static str {
        match self {
            CellOp::Identity => "identity",
            CellOp::SepConv3x3 => "sep_conv_3x3",
            CellOp::SepConv5x5 => "sep_conv_5x5",
            CellOp::DilConv3x3 => "dil_conv_3x3",
            CellOp::MaxPool3x3 => "max_pool_3x3",
            CellOp::AvgPool3x3 => "avg_pool_3x3",
            CellOp::Conv3x3 => "conv_3x3",
            CellOp::Zero => "zero",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "identity" => CellOp::Identity,
            "sep_conv_3x3" => CellOp::SepConv3x3,
            "sep_conv_5x5" => CellOp::SepConv5x5,
            "dil_conv_3x3" => CellOp::DilConv3x3,
            "max_pool_3x3" => CellOp::MaxPool3x3,
            "avg_pool_3x3" => CellOp::AvgPool3x3,
            "conv_3x3" => CellOp::Conv3x3,
            "zero" => CellOp::Zero,
            other => return Err(Error::config(format!("unknown operation '{other}'"))),
        })
    }

    pub fn default_set() -> Vec<CellOp> {
        vec![
            CellOp::Identity,
            CellOp::SepConv3x3,
            CellOp::SepConv5x5,
            CellOp::DilConv3x3,
            CellOp::MaxPool3x3,
            CellOp::AvgPool3x3,
        ]
    }

    /// Learnable tensors of this op at channel count `c`, as
    /// (suffix, shape) pairs in a fixed order.
    pub fn param_shapes(self, c: usize) -> Vec<(&'static str, Vec<usize>)> {
        match self {
            CellOp::SepConv3x3 => vec![
                ("dw", vec![c, 1, 3, 3]),
                ("pw", vec![c, c, 1, 1]),
                ("bn.g", vec![c]),
                ("bn.b", vec![c]),
            ],
            CellOp::SepConv5x5 => vec![
                ("dw", vec![c, 1, 5, 5]),
                ("pw", vec![c, c, 1, 1]),
                ("bn.g", vec![c]),
                ("bn.b", vec![c]),
            ],
            CellOp::DilConv3x3 => vec![
                ("dw", vec![c, 1, 3, 3]),
                ("pw", vec![c, c, 1, 1]),
                ("bn.g", vec![c]),
                ("bn.b", vec![c]),
            ],
            CellOp::Conv3x3 => vec![("k", vec![c, c, 3, 3])],
            CellOp::Identity | CellOp::MaxPool3x3 | CellOp::AvgPool3x3 | CellOp::Zero => vec![],
        }
    }
}

/// Fresh parameter tensor for (suffix, shape): norm scales start at one,
/// norm shifts at zero, kernels He-style normal with fan-in from the shape.
pub fn init_param(suffix: &str, shape: &[usize], rng: &mut Rng) -> Tensor {
    if suffix.ends_with("bn.g") || suffix == "g" {
        return Tensor::ones(shape).with_grad();
    }
    if suffix.ends_with("bn.b") || suffix == "b" {
        return Tensor::zeros(shape).with_grad();
    }
    let fan_in: usize = shape[1..].iter().product();
    let std = (2.0 / fan_in as f64).sqrt();
    let data: Vec<f64> = (0..shape.iter().product())
        .map(|_| rng.normal_scaled(std))
        .collect();
    Tensor::new(shape.to_vec(), data).unwrap().with_grad()
}

/// Spatial decimation used wherever a parameter-free op needs stride 2.
fn decimate(tape: &mut Tape, x: Val) -> AdResult<Val> {
    tape.avg_pool2d(x, 1, 2, 0)
}

/// Apply one candidate op. `params` maps this op's suffixes to tape values.
pub fn apply_op(
    tape: &mut Tape,
    op: CellOp,
    x: Val,
    stride: usize,
    params: &BTreeMap<String, Val>,
    bn_eps: f64,
) -> AdResult<Val> {
    let get = |suffix: &str| -> AdResult<Val> {
        params.get(suffix).copied().ok_or_else(|| {
            AdError::contract(format!("missing parameter '{suffix}' for {}", op.name()))
        })
    };
    match op {
        CellOp::Identity => {
            if stride == 1 {
                Ok(x)
            } else {
                decimate(tape, x)
            }
        }
        CellOp::Zero => {
            let z = if stride == 1 { x } else { decimate(tape, x)? };
            tape.smul(z, 0.0)
        }
        CellOp::MaxPool3x3 => tape.max_pool2d(x, 3, stride, 1),
        CellOp::AvgPool3x3 => tape.avg_pool2d(x, 3, stride, 1),
        CellOp::SepConv3x3 | CellOp::SepConv5x5 | CellOp::DilConv3x3 => {
            let c = tape.value(x).shape()[1];
            let (pad, dilation) = match op {
                CellOp::SepConv3x3 => (1, 1),
                CellOp::SepConv5x5 => (2, 1),
                CellOp::DilConv3x3 => (2, 2),
                _ => unreachable!(),
            };
            let r = tape.relu(x)?;
            let d = tape.conv2d(r, get("dw")?, stride, pad, dilation, c)?;
            let p = tape.conv2d(d, get("pw")?, 1, 0, 1, 1)?;
            tape.channel_norm(p, get("bn.g")?, get("bn.b")?, bn_eps)
        }
        CellOp::Conv3x3 => {
            let r = tape.relu(x)?;
            tape.conv2d(r, get("k")?, stride, 1, 1, 1)
        }
    }
}

/// Mixture of all candidate ops on one edge, weighted by the softmax of
/// that edge's scores.
pub fn mixed_op_forward(
    tape: &mut Tape,
    x: Val,
    alpha: Val,
    ops: &[CellOp],
    stride: usize,
    params: &BTreeMap<String, Val>,
    bn_eps: f64,
) -> AdResult<Val> {
    if ops.is_empty() {
        return Err(AdError::contract("mixed op over an empty candidate set"));
    }
    if tape.value(alpha).numel() != ops.len() {
        return Err(AdError::contract(format!(
            "edge scores have {} entries for {} candidate ops",
            tape.value(alpha).numel(),
            ops.len()
        )));
    }
    let p = tape.softmax(alpha)?;
    let mut acc: Option<Val> = None;
    for (idx, &op) in ops.iter().enumerate() {
        let per_op: BTreeMap<String, Val> = params
            .iter()
            .filter_map(|(k, &v)| {
                k.strip_prefix(&format!("{}.", op.name()))
                    .map(|suffix| (suffix.to_string(), v))
            })
            .collect();
        let y = apply_op(tape, op, x, stride, &per_op, bn_eps)?;
        let w = tape.index(p, idx)?;
        let wy = tape.scale(y, w)?;
        acc = Some(match acc {
            None => wy,
            Some(a) => tape.add(a, wy)?,
        });
    }
    Ok(acc.unwrap())
}
