//! Full reductions and channel concatenation.

use crate::error::{Error, Result};
use crate::ops::Saved;
use crate::tensor::Tensor;

pub fn sum_forward(x: &Tensor) -> Result<(Tensor, Saved)> {
    Ok((Tensor::scalar(x.data().iter().sum()), Saved::None))
}

pub fn sum_backward(x: &Tensor, grad: &Tensor) -> Result<Vec<Option<Tensor>>> {
    Ok(vec![Some(Tensor::full(x.shape(), grad.data()[0]))])
}

pub fn mean_forward(x: &Tensor) -> Result<(Tensor, Saved)> {
    if x.numel() == 0 {
        return Err(Error::contract("mean of an empty tensor"));
    }
    Ok((
        Tensor::scalar(x.data().iter().sum::<f64>() / x.numel() as f64),
        Saved::None,
    ))
}

pub fn mean_backward(x: &Tensor, grad: &Tensor) -> Result<Vec<Option<Tensor>>> {
    Ok(vec![Some(Tensor::full(x.shape(), grad.data()[0] / x.numel() as f64))])
}

pub fn concat_forward(inputs: &[&Tensor]) -> Result<(Tensor, Saved)> {
    let first = inputs[0];
    if first.rank() != 4 {
        return Err(Error::shape(format!(
            "concat_channels: NCHW inputs required, got {:?}",
            first.shape()
        )));
    }
    let (batch, h, w) = (first.shape()[0], first.shape()[2], first.shape()[3]);
    let mut channels = 0;
    for t in inputs {
        if t.rank() != 4 || t.shape()[0] != batch || t.shape()[2] != h || t.shape()[3] != w {
            return Err(Error::shape(format!(
                "concat_channels: incompatible operand shape {:?} (want [{}., ., {}, {}])",
                t.shape(),
                batch,
                h,
                w
            )));
        }
        channels += t.shape()[1];
    }
    let plane = h * w;
    let mut out = vec![0.0; batch * channels * plane];
    for b in 0..batch {
        let mut c_off = 0;
        for t in inputs {
            let tc = t.shape()[1];
            let src = &t.data()[b * tc * plane..(b + 1) * tc * plane];
            let dst_base = (b * channels + c_off) * plane;
            out[dst_base..dst_base + tc * plane].copy_from_slice(src);
            c_off += tc;
        }
    }
    Ok((Tensor::new(vec![batch, channels, h, w], out)?, Saved::None))
}

pub fn concat_backward(inputs: &[&Tensor], grad: &Tensor) -> Result<Vec<Option<Tensor>>> {
    let batch = inputs[0].shape()[0];
    let (h, w) = (inputs[0].shape()[2], inputs[0].shape()[3]);
    let plane = h * w;
    let channels = grad.shape()[1];
    let mut grads: Vec<Option<Tensor>> = inputs.iter().map(|t| Some(Tensor::zeros(t.shape()))).collect();
    for b in 0..batch {
        let mut c_off = 0;
        for (slot, t) in grads.iter_mut().zip(inputs) {
            let tc = t.shape()[1];
            let src_base = (b * channels + c_off) * plane;
            let dst = slot.as_mut().unwrap();
            dst.data_mut()[b * tc * plane..(b + 1) * tc * plane]
                .copy_from_slice(&grad.data()[src_base..src_base + tc * plane]);
            c_off += tc;
        }
    }
    Ok(grads)
}
