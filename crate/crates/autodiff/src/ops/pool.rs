//! Spatial pooling over NCHW tensors.

use crate::error::{Error, Result};
use crate::ops::Saved;
use crate::tensor::Tensor;

struct PoolGeometry {
    batch: usize,
    channels: usize,
    h: usize,
    w: usize,
    h_out: usize,
    w_out: usize,
}

fn geometry(x: &Tensor, kernel: usize, stride: usize, padding: usize) -> Result<PoolGeometry> {
    if x.rank() != 4 {
        return Err(Error::shape(format!("pool: NCHW input required, got {:?}", x.shape())));
    }
    if kernel == 0 || stride == 0 {
        return Err(Error::contract("pool: kernel and stride must be nonzero"));
    }
    let (batch, channels, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let padded_h = h + 2 * padding;
    let padded_w = w + 2 * padding;
    if padded_h < kernel || padded_w < kernel {
        return Err(Error::shape(format!(
            "pool: kernel {} exceeds padded extent {}x{}",
            kernel, padded_h, padded_w
        )));
    }
    Ok(PoolGeometry {
        batch,
        channels,
        h,
        w,
        h_out: (padded_h - kernel) / stride + 1,
        w_out: (padded_w - kernel) / stride + 1,
    })
}

/// Max pooling. Padded positions never win; ties keep the first (lowest
/// flat index) position so the backward routing is deterministic.
pub fn max_forward(x: &Tensor, kernel: usize, stride: usize, padding: usize) -> Result<(Tensor, Saved)> {
    let g = geometry(x, kernel, stride, padding)?;
    let xd = x.data();
    let mut out = vec![0.0; g.batch * g.channels * g.h_out * g.w_out];
    let mut argmax = vec![0usize; out.len()];

    let mut oi = 0;
    for b in 0..g.batch {
        for c in 0..g.channels {
            let plane = (b * g.channels + c) * g.h * g.w;
            for oy in 0..g.h_out {
                for ox in 0..g.w_out {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_idx = usize::MAX;
                    for ky in 0..kernel {
                        let iy = (oy * stride + ky) as isize - padding as isize;
                        if iy < 0 || iy >= g.h as isize {
                            continue;
                        }
                        for kx in 0..kernel {
                            let ix = (ox * stride + kx) as isize - padding as isize;
                            if ix < 0 || ix >= g.w as isize {
                                continue;
                            }
                            let idx = plane + iy as usize * g.w + ix as usize;
                            if xd[idx] > best {
                                best = xd[idx];
                                best_idx = idx;
                            }
                        }
                    }
                    if best_idx == usize::MAX {
                        return Err(Error::shape(
                            "pool: window contains no input positions".to_string(),
                        ));
                    }
                    out[oi] = best;
                    argmax[oi] = best_idx;
                    oi += 1;
                }
            }
        }
    }

    Ok((
        Tensor::new(vec![g.batch, g.channels, g.h_out, g.w_out], out)?,
        Saved::Indices(argmax),
    ))
}

pub fn max_backward(x: &Tensor, saved: &Saved, grad: &Tensor) -> Result<Vec<Option<Tensor>>> {
    let Saved::Indices(argmax) = saved else {
        return Err(Error::contract("max_pool2d: missing saved indices"));
    };
    let mut dx = Tensor::zeros(x.shape());
    for (g, &idx) in grad.data().iter().zip(argmax) {
        dx.data_mut()[idx] += g;
    }
    Ok(vec![Some(dx)])
}

/// Average pooling; the divisor is always the full kernel area, so padded
/// positions count as zeros.
pub fn avg_forward(x: &Tensor, kernel: usize, stride: usize, padding: usize) -> Result<(Tensor, Saved)> {
    let g = geometry(x, kernel, stride, padding)?;
    let xd = x.data();
    let area = (kernel * kernel) as f64;
    let mut out = vec![0.0; g.batch * g.channels * g.h_out * g.w_out];

    let mut oi = 0;
    for b in 0..g.batch {
        for c in 0..g.channels {
            let plane = (b * g.channels + c) * g.h * g.w;
            for oy in 0..g.h_out {
                for ox in 0..g.w_out {
                    let mut acc = 0.0;
                    for ky in 0..kernel {
                        let iy = (oy * stride + ky) as isize - padding as isize;
                        if iy < 0 || iy >= g.h as isize {
                            continue;
                        }
                        for kx in 0..kernel {
                            let ix = (ox * stride + kx) as isize - padding as isize;
                            if ix < 0 || ix >= g.w as isize {
                                continue;
                            }
                            acc += xd[plane + iy as usize * g.w + ix as usize];
                        }
                    }
                    out[oi] = acc / area;
                    oi += 1;
                }
            }
        }
    }

    Ok((
        Tensor::new(vec![g.batch, g.channels, g.h_out, g.w_out], out)?,
        Saved::None,
    ))
}

pub fn avg_backward(
    x: &Tensor,
    grad: &Tensor,
    kernel: usize,
    stride: usize,
    padding: usize,
) -> Result<Vec<Option<Tensor>>> {
    let g = geometry(x, kernel, stride, padding)?;
    let area = (kernel * kernel) as f64;
    let gd = grad.data();
    let mut dx = Tensor::zeros(x.shape());

    let mut oi = 0;
    for b in 0..g.batch {
        for c in 0..g.channels {
            let plane = (b * g.channels + c) * g.h * g.w;
            for oy in 0..g.h_out {
                for ox in 0..g.w_out {
                    let share = gd[oi] / area;
                    oi += 1;
                    if share == 0.0 {
                        continue;
                    }
                    for ky in 0..kernel {
                        let iy = (oy * stride + ky) as isize - padding as isize;
                        if iy < 0 || iy >= g.h as isize {
                            continue;
                        }
                        for kx in 0..kernel {
                            let ix = (ox * stride + kx) as isize - padding as isize;
                            if ix < 0 || ix >= g.w as isize {
                                continue;
                            }
                            dx.data_mut()[plane + iy as usize * g.w + ix as usize] += share;
                        }
                    }
                }
            }
        }
    }

    Ok(vec![Some(dx)])
}

/// NCHW -> NC mean over the two spatial axes.
pub fn global_avg_forward(x: &Tensor) -> Result<(Tensor, Saved)> {
    if x.rank() != 4 {
        return Err(Error::shape(format!(
            "global_avg_pool: NCHW input required, got {:?}",
            x.shape()
        )));
    }
    let (batch, channels, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let plane = h * w;
    let mut out = vec![0.0; batch * channels];
    for (i, o) in out.iter_mut().enumerate() {
        let base = i * plane;
        *o = x.data()[base..base + plane].iter().sum::<f64>() / plane as f64;
    }
    Ok((Tensor::new(vec![batch, channels], out)?, Saved::None))
}

pub fn global_avg_backward(x: &Tensor, grad: &Tensor) -> Result<Vec<Option<Tensor>>> {
    let (h, w) = (x.shape()[2], x.shape()[3]);
    let plane = h * w;
    let mut dx = Tensor::zeros(x.shape());
    for (i, &g) in grad.data().iter().enumerate() {
        let share = g / plane as f64;
        for v in &mut dx.data_mut()[i * plane..(i + 1) * plane] {
            *v = share;
        }
    }
    Ok(vec![Some(dx)])
}
