//! Primitive tensor operations: forward kernels and analytic backwards.
//!
//! `eval` computes a primitive eagerly on plain tensors; the tape calls it and
//! stores whatever the backward pass needs in [`Saved`]. Every backward here
//! is covered by finite-difference tests.

mod conv;
mod elementwise;
mod matmul;
mod norm;
mod pool;
mod reduce;
mod softmax;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// A primitive operation together with its non-differentiable attributes.
#[derive(Debug, Clone, PartialEq)]
pub enum OpKind {
    Add,
    Sub,
    Mul,
    Div,
    /// Multiply by a compile-time constant factor.
    SMul { factor: f64 },
    /// Multiply a tensor by a single-element tensor (both differentiable).
    Scale,
    /// Extract one element of a rank-1 tensor as a scalar.
    Index { index: usize },
    /// Dot product with a fixed coefficient vector, yielding a scalar.
    WeightedSum { weights: Vec<f64> },
    /// Maximum over the positions of a rank-1 tensor selected by `mask`.
    /// Ties route the gradient to the lowest selected index.
    MaskedMax { mask: Vec<bool> },
    MatMul,
    /// Add a rank-1 bias to every row of a rank-2 tensor.
    BiasAdd,
    /// Grouped 2-D convolution, NCHW input and OIHW kernel.
    Conv2d { stride: usize, padding: usize, dilation: usize, groups: usize },
    MaxPool2d { kernel: usize, stride: usize, padding: usize },
    AvgPool2d { kernel: usize, stride: usize, padding: usize },
    Relu,
    /// Concatenate NCHW tensors along the channel axis.
    ConcatChannels,
    /// Per-channel batch-statistics normalization with learned scale/shift.
    ChannelNorm { eps: f64 },
    /// Max-shifted softmax over a rank-1 tensor.
    Softmax,
    Log,
    Exp,
    SumAll,
    MeanAll,
    /// NCHW -> NC mean over the spatial axes.
    GlobalAvgPool,
    /// Mean softmax cross-entropy of rank-2 logits against fixed labels.
    CrossEntropy { labels: Vec<usize> },
}

/// Forward-pass byproducts kept for the backward pass.
#[derive(Debug, Clone)]
pub enum Saved {
    None,
    /// Flat input index chosen per output element (max pooling).
    Indices(Vec<usize>),
    /// Softmax probabilities.
    Probs(Tensor),
    /// Normalized activations and per-channel inverse std.
    Norm { xhat: Vec<f64>, inv_std: Vec<f64> },
}

impl OpKind {
    pub fn name(&self) -> &'static str {
        match self {
            OpKind::Add => "add",
            OpKind::Sub => "sub",
            OpKind::Mul => "mul",
            OpKind::Div => "div",
            OpKind::SMul { .. } => "smul",
            OpKind::Scale => "scale",
            OpKind::Index { .. } => "index",
            OpKind::WeightedSum { .. } => "weighted_sum",
            OpKind::MaskedMax { .. } => "masked_max",
            OpKind::MatMul => "matmul",
            OpKind::BiasAdd => "bias_add",
            OpKind::Conv2d { .. } => "conv2d",
            OpKind::MaxPool2d { .. } => "max_pool2d",
            OpKind::AvgPool2d { .. } => "avg_pool2d",
            OpKind::Relu => "relu",
            OpKind::ConcatChannels => "concat_channels",
            OpKind::ChannelNorm { .. } => "channel_norm",
            OpKind::Softmax => "softmax",
            OpKind::Log => "log",
            OpKind::Exp => "exp",
            OpKind::SumAll => "sum",
            OpKind::MeanAll => "mean",
            OpKind::GlobalAvgPool => "global_avg_pool",
            OpKind::CrossEntropy { .. } => "cross_entropy",
        }
    }
}

fn arity_error(op: &OpKind, got: usize, want: &str) -> Error {
    Error::contract(format!("{} expects {} inputs, got {}", op.name(), want, got))
}

fn expect_inputs<'a>(
    op: &OpKind,
    inputs: &'a [&'a Tensor],
    n: usize,
) -> Result<&'a [&'a Tensor]> {
    if inputs.len() != n {
        return Err(arity_error(op, inputs.len(), &n.to_string()));
    }
    Ok(inputs)
}

/// Evaluate a primitive. The output is checked to be finite; a non-finite
/// result is reported as a numeric error instead of propagating silently.
pub fn eval(op: &OpKind, inputs: &[&Tensor]) -> Result<(Tensor, Saved)> {
    let (out, saved) = dispatch_eval(op, inputs)?;
    if !out.is_finite() {
        return Err(Error::numeric(format!("{} produced a non-finite value", op.name())));
    }
    Ok((out, saved))
}

fn dispatch_eval(op: &OpKind, inputs: &[&Tensor]) -> Result<(Tensor, Saved)> {
    match op {
        OpKind::Add | OpKind::Sub | OpKind::Mul | OpKind::Div => {
            let t = expect_inputs(op, inputs, 2)?;
            elementwise::binary_forward(op, t[0], t[1])
        }
        OpKind::SMul { factor } => {
            let t = expect_inputs(op, inputs, 1)?;
            elementwise::smul_forward(t[0], *factor)
        }
        OpKind::Scale => {
            let t = expect_inputs(op, inputs, 2)?;
            elementwise::scale_forward(t[0], t[1])
        }
        OpKind::Index { index } => {
            let t = expect_inputs(op, inputs, 1)?;
            elementwise::index_forward(t[0], *index)
        }
        OpKind::WeightedSum { weights } => {
            let t = expect_inputs(op, inputs, 1)?;
            elementwise::weighted_sum_forward(t[0], weights)
        }
        OpKind::MaskedMax { mask } => {
            let t = expect_inputs(op, inputs, 1)?;
            elementwise::masked_max_forward(t[0], mask)
        }
        OpKind::Relu => {
            let t = expect_inputs(op, inputs, 1)?;
            elementwise::relu_forward(t[0])
        }
        OpKind::Log => {
            let t = expect_inputs(op, inputs, 1)?;
            elementwise::log_forward(t[0])
        }
        OpKind::Exp => {
            let t = expect_inputs(op, inputs, 1)?;
            elementwise::exp_forward(t[0])
        }
        OpKind::BiasAdd => {
            let t = expect_inputs(op, inputs, 2)?;
            elementwise::bias_add_forward(t[0], t[1])
        }
        OpKind::MatMul => {
            let t = expect_inputs(op, inputs, 2)?;
            matmul::forward(t[0], t[1])
        }
        OpKind::Conv2d { stride, padding, dilation, groups } => {
            let t = expect_inputs(op, inputs, 2)?;
            conv::forward(t[0], t[1], *stride, *padding, *dilation, *groups)
        }
        OpKind::MaxPool2d { kernel, stride, padding } => {
            let t = expect_inputs(op, inputs, 1)?;
            pool::max_forward(t[0], *kernel, *stride, *padding)
        }
        OpKind::AvgPool2d { kernel, stride, padding } => {
            let t = expect_inputs(op, inputs, 1)?;
            pool::avg_forward(t[0], *kernel, *stride, *padding)
        }
        OpKind::GlobalAvgPool => {
            let t = expect_inputs(op, inputs, 1)?;
            pool::global_avg_forward(t[0])
        }
        OpKind::ConcatChannels => {
            if inputs.is_empty() {
                return Err(arity_error(op, 0, "at least 1"));
            }
            reduce::concat_forward(inputs)
        }
        OpKind::ChannelNorm { eps } => {
            let t = expect_inputs(op, inputs, 3)?;
            norm::forward(t[0], t[1], t[2], *eps)
        }
        OpKind::Softmax => {
            let t = expect_inputs(op, inputs, 1)?;
            softmax::forward(t[0])
        }
        OpKind::SumAll => {
            let t = expect_inputs(op, inputs, 1)?;
            reduce::sum_forward(t[0])
        }
        OpKind::MeanAll => {
            let t = expect_inputs(op, inputs, 1)?;
            reduce::mean_forward(t[0])
        }
        OpKind::CrossEntropy { labels } => {
            let t = expect_inputs(op, inputs, 1)?;
            softmax::cross_entropy_forward(t[0], labels)
        }
    }
}

/// Input gradients for one primitive given the output gradient.
///
/// Entries are `None` for inputs that receive no gradient. The result is
/// aligned with `inputs`.
pub fn backward(
    op: &OpKind,
    inputs: &[&Tensor],
    output: &Tensor,
    saved: &Saved,
    grad: &Tensor,
) -> Result<Vec<Option<Tensor>>> {
    match op {
        OpKind::Add | OpKind::Sub | OpKind::Mul | OpKind::Div => {
            elementwise::binary_backward(op, inputs[0], inputs[1], grad)
        }
        OpKind::SMul { factor } => elementwise::smul_backward(grad, *factor),
        OpKind::Scale => elementwise::scale_backward(inputs[0], inputs[1], grad),
        OpKind::Index { index } => elementwise::index_backward(inputs[0], *index, grad),
        OpKind::WeightedSum { weights } => elementwise::weighted_sum_backward(weights, grad),
        OpKind::MaskedMax { .. } => elementwise::masked_max_backward(inputs[0], saved, grad),
        OpKind::Relu => elementwise::relu_backward(inputs[0], grad),
        OpKind::Log => elementwise::log_backward(inputs[0], grad),
        OpKind::Exp => elementwise::exp_backward(output, grad),
        OpKind::BiasAdd => elementwise::bias_add_backward(inputs[0], inputs[1], grad),
        OpKind::MatMul => matmul::backward(inputs[0], inputs[1], grad),
        OpKind::Conv2d { stride, padding, dilation, groups } => {
            conv::backward(inputs[0], inputs[1], grad, *stride, *padding, *dilation, *groups)
        }
        OpKind::MaxPool2d { .. } => pool::max_backward(inputs[0], saved, grad),
        OpKind::AvgPool2d { kernel, stride, padding } => {
            pool::avg_backward(inputs[0], grad, *kernel, *stride, *padding)
        }
        OpKind::GlobalAvgPool => pool::global_avg_backward(inputs[0], grad),
        OpKind::ConcatChannels => reduce::concat_backward(inputs, grad),
        OpKind::ChannelNorm { .. } => norm::backward(inputs[0], inputs[1], saved, grad),
        OpKind::Softmax => softmax::backward(output, grad),
        OpKind::SumAll => reduce::sum_backward(inputs[0], grad),
        OpKind::MeanAll => reduce::mean_backward(inputs[0], grad),
        OpKind::CrossEntropy { labels } => {
            softmax::cross_entropy_backward(inputs[0], labels, saved, grad)
        }
    }
}
