//! Recording tape and reverse-mode backward driver.
//!
//! Nodes are appended in execution order, so every node's inputs have smaller
//! ids and a single reverse sweep visits each record exactly once. A tape is
//! a single-owner value; values from different tapes cannot be mixed.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::ops::{self, OpKind, Saved};
use crate::tensor::Tensor;

static NEXT_TAPE_TAG: AtomicU64 = AtomicU64::new(1);

/// Storage width of computed values. `F32` rounds every primitive result
/// through 32-bit precision; the analytic structure is unchanged.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    F64,
    F32,
}

/// Handle to a value on a specific tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Val {
    tag: u64,
    id: usize,
}

enum NodeKind {
    Leaf,
    Op(OpKind),
}

struct Node {
    kind: NodeKind,
    inputs: Vec<usize>,
    value: Tensor,
    saved: Saved,
    needs_grad: bool,
}

pub struct Tape {
    tag: u64,
    nodes: Vec<Node>,
    precision: Precision,
}

impl Default for Tape {
    fn default() -> Self {
        Tape::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::with_precision(Precision::F64)
    }

    pub fn with_precision(precision: Precision) -> Self {
        Tape {
            tag: NEXT_TAPE_TAG.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
            precision,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn check_val(&self, v: Val) -> Result<()> {
        if v.tag != self.tag {
            return Err(Error::contract("value belongs to a different tape"));
        }
        if v.id >= self.nodes.len() {
            return Err(Error::contract("value id out of range for this tape"));
        }
        Ok(())
    }

    fn round(&self, mut t: Tensor) -> Tensor {
        if self.precision == Precision::F32 {
            for v in t.data_mut() {
                *v = *v as f32 as f64;
            }
        }
        t
    }

    /// Register an input tensor. Gradient participation follows
    /// `tensor.requires_grad`; non-finite inputs are rejected.
    pub fn leaf(&mut self, tensor: Tensor) -> Result<Val> {
        if !tensor.is_finite() {
            return Err(Error::numeric("leaf tensor contains a non-finite value"));
        }
        let needs_grad = tensor.requires_grad;
        let value = self.round(tensor);
        self.nodes.push(Node {
            kind: NodeKind::Leaf,
            inputs: Vec::new(),
            value,
            saved: Saved::None,
            needs_grad,
        });
        Ok(Val { tag: self.tag, id: self.nodes.len() - 1 })
    }

    /// Register a tensor that never receives a gradient.
    pub fn constant(&mut self, mut tensor: Tensor) -> Result<Val> {
        tensor.requires_grad = false;
        self.leaf(tensor)
    }

    pub fn scalar_const(&mut self, v: f64) -> Result<Val> {
        self.constant(Tensor::scalar(v))
    }

    /// Apply a primitive to values on this tape.
    pub fn apply(&mut self, kind: OpKind, inputs: &[Val]) -> Result<Val> {
        let mut needs_grad = false;
        for &v in inputs {
            self.check_val(v)?;
            needs_grad |= self.nodes[v.id].needs_grad;
        }
        let tensors: Vec<&Tensor> = inputs.iter().map(|v| &self.nodes[v.id].value).collect();
        let (out, saved) = ops::eval(&kind, &tensors)?;
        let out = self.round(out);
        self.nodes.push(Node {
            kind: NodeKind::Op(kind),
            inputs: inputs.iter().map(|v| v.id).collect(),
            value: out,
            saved,
            needs_grad,
        });
        Ok(Val { tag: self.tag, id: self.nodes.len() - 1 })
    }

    pub fn value(&self, v: Val) -> &Tensor {
        assert_eq!(v.tag, self.tag, "value belongs to a different tape");
        &self.nodes[v.id].value
    }

    pub fn item(&self, v: Val) -> Result<f64> {
        self.value(v).item()
    }

    /// Reverse sweep from a scalar loss. Returns a gradient per reachable
    /// node; `requires_grad` leaves that the loss does not depend on get
    /// explicit zero gradients.
    pub fn backward(&self, loss: Val) -> Result<Gradients> {
        self.check_val(loss)?;
        let loss_node = &self.nodes[loss.id];
        if loss_node.value.numel() != 1 {
            return Err(Error::contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                loss_node.value.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.id] = Some(Tensor::ones(loss_node.value.shape()));

        for id in (0..=loss.id).rev() {
            let node = &self.nodes[id];
            if !node.needs_grad {
                grads[id] = None;
                continue;
            }
            let Some(gout) = grads[id].take() else { continue };
            if let NodeKind::Op(kind) = &node.kind {
                let tensors: Vec<&Tensor> =
                    node.inputs.iter().map(|&i| &self.nodes[i].value).collect();
                let input_grads = ops::backward(kind, &tensors, &node.value, &node.saved, &gout)?;
                for (slot, g) in node.inputs.iter().zip(input_grads) {
                    let Some(g) = g else { continue };
                    if !self.nodes[*slot].needs_grad {
                        continue;
                    }
                    match &mut grads[*slot] {
                        Some(acc) => acc.accumulate(&g)?,
                        empty => *empty = Some(g),
                    }
                }
                grads[id] = Some(gout);
            } else {
                grads[id] = Some(gout);
            }
        }

        // Leaves the loss never touched still report a (zero) gradient.
        for (id, node) in self.nodes.iter().enumerate() {
            if matches!(node.kind, NodeKind::Leaf) && node.needs_grad && grads[id].is_none() {
                grads[id] = Some(Tensor::zeros(node.value.shape()));
            }
        }

        Ok(Gradients { tag: self.tag, by_id: grads })
    }

    // Sugar for the common primitives.

    pub fn add(&mut self, a: Val, b: Val) -> Result<Val> {
        self.apply(OpKind::Add, &[a, b])
    }

    pub fn sub(&mut self, a: Val, b: Val) -> Result<Val> {
        self.apply(OpKind::Sub, &[a, b])
    }

    pub fn mul(&mut self, a: Val, b: Val) -> Result<Val> {
        self.apply(OpKind::Mul, &[a, b])
    }

    pub fn div(&mut self, a: Val, b: Val) -> Result<Val> {
        self.apply(OpKind::Div, &[a, b])
    }

    pub fn smul(&mut self, x: Val, factor: f64) -> Result<Val> {
        self.apply(OpKind::SMul { factor }, &[x])
    }

    pub fn scale(&mut self, x: Val, s: Val) -> Result<Val> {
        self.apply(OpKind::Scale, &[x, s])
    }

    pub fn index(&mut self, x: Val, index: usize) -> Result<Val> {
        self.apply(OpKind::Index { index }, &[x])
    }

    pub fn weighted_sum(&mut self, x: Val, weights: Vec<f64>) -> Result<Val> {
        self.apply(OpKind::WeightedSum { weights }, &[x])
    }

    pub fn masked_max(&mut self, x: Val, mask: Vec<bool>) -> Result<Val> {
        self.apply(OpKind::MaskedMax { mask }, &[x])
    }

    pub fn matmul(&mut self, a: Val, b: Val) -> Result<Val> {
        self.apply(OpKind::MatMul, &[a, b])
    }

    pub fn bias_add(&mut self, x: Val, b: Val) -> Result<Val> {
        self.apply(OpKind::BiasAdd, &[x, b])
    }

    pub fn conv2d(
        &mut self,
        x: Val,
        kernel: Val,
        stride: usize,
        padding: usize,
        dilation: usize,
        groups: usize,
    ) -> Result<Val> {
        self.apply(OpKind::Conv2d { stride, padding, dilation, groups }, &[x, kernel])
    }

    pub fn max_pool2d(&mut self, x: Val, kernel: usize, stride: usize, padding: usize) -> Result<Val> {
        self.apply(OpKind::MaxPool2d { kernel, stride, padding }, &[x])
    }

    pub fn avg_pool2d(&mut self, x: Val, kernel: usize, stride: usize, padding: usize) -> Result<Val> {
        self.apply(OpKind::AvgPool2d { kernel, stride, padding }, &[x])
    }

    pub fn relu(&mut self, x: Val) -> Result<Val> {
        self.apply(OpKind::Relu, &[x])
    }

    pub fn concat_channels(&mut self, xs: &[Val]) -> Result<Val> {
        self.apply(OpKind::ConcatChannels, xs)
    }

    pub fn channel_norm(&mut self, x: Val, gamma: Val, shift: Val, eps: f64) -> Result<Val> {
        self.apply(OpKind::ChannelNorm { eps }, &[x, gamma, shift])
    }

    pub fn softmax(&mut self, x: Val) -> Result<Val> {
        self.apply(OpKind::Softmax, &[x])
    }

    pub fn log(&mut self, x: Val) -> Result<Val> {
        self.apply(OpKind::Log, &[x])
    }

    pub fn exp(&mut self, x: Val) -> Result<Val> {
        self.apply(OpKind::Exp, &[x])
    }

    pub fn sum(&mut self, x: Val) -> Result<Val> {
        self.apply(OpKind::SumAll, &[x])
    }

    pub fn mean(&mut self, x: Val) -> Result<Val> {
        self.apply(OpKind::MeanAll, &[x])
    }

    pub fn global_avg_pool(&mut self, x: Val) -> Result<Val> {
        self.apply(OpKind::GlobalAvgPool, &[x])
    }

    pub fn cross_entropy(&mut self, logits: Val, labels: Vec<usize>) -> Result<Val> {
        self.apply(OpKind::CrossEntropy { labels }, &[logits])
    }
}

/// Result of a backward sweep.
pub struct Gradients {
    tag: u64,
    by_id: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `v`, if one was computed.
    pub fn wrt(&self, v: Val) -> Option<&Tensor> {
        if v.tag != self.tag {
            return None;
        }
        self.by_id.get(v.id).and_then(|g| g.as_ref())
    }

    /// Gradient for a leaf that participates in training; zero tensors are
    /// returned for untouched leaves, so absence means a contract misuse.
    pub fn expect_wrt(&self, v: Val) -> Result<&Tensor> {
        self.wrt(v)
            .ok_or_else(|| Error::contract("no gradient recorded for this value"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_of_leaf_gets_unit_gradients() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(&[1.0, 2.0, 3.0]).with_grad()).unwrap();
        let loss = tape.sum(x).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.wrt(x).unwrap().data(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn square_sum_gradient_is_two_x() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(&[1.0, 2.0]).with_grad()).unwrap();
        let sq = tape.mul(x, x).unwrap();
        let loss = tape.sum(sq).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.wrt(x).unwrap().data(), &[2.0, 4.0]);
    }

    #[test]
    fn backward_requires_scalar_loss() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(&[1.0, 2.0]).with_grad()).unwrap();
        assert!(matches!(tape.backward(x), Err(Error::Contract(_))));
    }

    #[test]
    fn values_cannot_cross_tapes() {
        let mut a = Tape::new();
        let mut b = Tape::new();
        let x = a.leaf(Tensor::scalar(1.0)).unwrap();
        let y = b.leaf(Tensor::scalar(1.0)).unwrap();
        assert!(matches!(a.apply(OpKind::Add, &[x, y]), Err(Error::Contract(_))));
    }

    #[test]
    fn non_finite_leaf_is_rejected() {
        let mut tape = Tape::new();
        assert!(matches!(
            tape.leaf(Tensor::scalar(f64::NAN)),
            Err(Error::Numeric(_))
        ));
    }

    #[test]
    fn division_by_zero_is_a_numeric_error() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::scalar(1.0)).unwrap();
        let b = tape.leaf(Tensor::scalar(0.0)).unwrap();
        assert!(matches!(tape.div(a, b), Err(Error::Numeric(_))));
    }

    #[test]
    fn untouched_leaf_reports_zero_gradient() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(2.0).with_grad()).unwrap();
        let unused = tape.leaf(Tensor::vector(&[1.0, 1.0]).with_grad()).unwrap();
        let loss = tape.mul(x, x).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.wrt(unused).unwrap().data(), &[0.0, 0.0]);
    }

    #[test]
    fn shared_subexpression_accumulates_fan_out() {
        // loss = x*y + x*y; both paths flow into the same product node.
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(3.0).with_grad()).unwrap();
        let y = tape.leaf(Tensor::scalar(5.0).with_grad()).unwrap();
        let xy = tape.mul(x, y).unwrap();
        let loss = tape.add(xy, xy).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.wrt(x).unwrap().data(), &[10.0]);
        assert_eq!(grads.wrt(y).unwrap().data(), &[6.0]);
    }

    #[test]
    fn f32_precision_rounds_values() {
        let mut tape = Tape::with_precision(Precision::F32);
        let x = tape.leaf(Tensor::scalar(0.1)).unwrap();
        assert_eq!(tape.value(x).data()[0], 0.1f32 as f64);
    }
}
