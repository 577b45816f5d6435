//! Per-channel normalization against the statistics of the current batch,
//! followed by a learned affine map.
//!
//! This is the training-mode form: the mean and biased variance are taken
//! over the batch and spatial axes of each channel every call, and gradients
//! flow through the statistics.

use crate::error::{Error, Result};
use crate::ops::Saved;
use crate::tensor::Tensor;

fn check(x: &Tensor, gamma: &Tensor, shift: &Tensor) -> Result<(usize, usize, usize)> {
    if x.rank() != 4 {
        return Err(Error::shape(format!("channel_norm: NCHW input required, got {:?}", x.shape())));
    }
    let channels = x.shape()[1];
    if gamma.shape() != [channels] || shift.shape() != [channels] {
        return Err(Error::shape(format!(
            "channel_norm: scale/shift must both have shape [{}], got {:?} and {:?}",
            channels,
            gamma.shape(),
            shift.shape()
        )));
    }
    Ok((x.shape()[0], channels, x.shape()[2] * x.shape()[3]))
}

pub fn forward(x: &Tensor, gamma: &Tensor, shift: &Tensor, eps: f64) -> Result<(Tensor, Saved)> {
    let (batch, channels, plane) = check(x, gamma, shift)?;
    let m = (batch * plane) as f64;
    let xd = x.data();
    let mut out = vec![0.0; xd.len()];
    let mut xhat = vec![0.0; xd.len()];
    let mut inv_std = vec![0.0; channels];

    for c in 0..channels {
        let mut sum = 0.0;
        let mut sq = 0.0;
        for b in 0..batch {
            let base = (b * channels + c) * plane;
            for &v in &xd[base..base + plane] {
                sum += v;
                sq += v * v;
            }
        }
        let mean = sum / m;
        let var = (sq / m - mean * mean).max(0.0);
        let istd = 1.0 / (var + eps).sqrt();
        inv_std[c] = istd;
        let g = gamma.data()[c];
        let d = shift.data()[c];
        for b in 0..batch {
            let base = (b * channels + c) * plane;
            for i in base..base + plane {
                let h = (xd[i] - mean) * istd;
                xhat[i] = h;
                out[i] = g * h + d;
            }
        }
    }

    Ok((
        Tensor::new(x.shape().to_vec(), out)?,
        Saved::Norm { xhat, inv_std },
    ))
}

pub fn backward(
    x: &Tensor,
    gamma: &Tensor,
    saved: &Saved,
    grad: &Tensor,
) -> Result<Vec<Option<Tensor>>> {
    let Saved::Norm { xhat, inv_std } = saved else {
        return Err(Error::contract("channel_norm: missing saved statistics"));
    };
    let (batch, channels, plane) = (x.shape()[0], x.shape()[1], x.shape()[2] * x.shape()[3]);
    let m = (batch * plane) as f64;
    let gd = grad.data();
    let mut dx = vec![0.0; gd.len()];
    let mut dgamma = vec![0.0; channels];
    let mut dshift = vec![0.0; channels];

    for c in 0..channels {
        let mut g_sum = 0.0;
        let mut gx_sum = 0.0;
        for b in 0..batch {
            let base = (b * channels + c) * plane;
            for i in base..base + plane {
                g_sum += gd[i];
                gx_sum += gd[i] * xhat[i];
            }
        }
        dgamma[c] = gx_sum;
        dshift[c] = g_sum;
        // d/dx of gamma * (x - mean) * inv_std: the mean and variance terms
        // subtract the per-channel averages of g and g*xhat.
        let scale = gamma.data()[c] * inv_std[c];
        let g_mean = g_sum / m;
        let gx_mean = gx_sum / m;
        for b in 0..batch {
            let base = (b * channels + c) * plane;
            for i in base..base + plane {
                dx[i] = scale * (gd[i] - g_mean - xhat[i] * gx_mean);
            }
        }
    }

    Ok(vec![
        Some(Tensor::new(x.shape().to_vec(), dx)?),
        Some(Tensor::new(vec![channels], dgamma)?),
        Some(Tensor::new(vec![channels], dshift)?),
    ])
}
