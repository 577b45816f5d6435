//! Grouped 2-D convolution with stride, zero padding and dilation.
//!
//! Input is NCHW, kernels are OIHW with I counted per group. Depthwise
//! convolution is the `groups == channels` case; dilation spreads kernel taps
//! without changing the parameter count. Direct loops, no im2col.

use crate::error::{Error, Result};
use crate::ops::Saved;
use crate::tensor::Tensor;

struct Geometry {
    batch: usize,
    c_in: usize,
    h: usize,
    w: usize,
    c_out: usize,
    cg_in: usize,
    kh: usize,
    kw: usize,
    h_out: usize,
    w_out: usize,
    out_per_group: usize,
}

fn out_extent(extent: usize, kernel: usize, stride: usize, padding: usize, dilation: usize) -> Result<usize> {
    let effective = dilation * (kernel - 1) + 1;
    let padded = extent + 2 * padding;
    if padded < effective {
        return Err(Error::shape(format!(
            "conv2d: kernel extent {} exceeds padded input extent {}",
            effective, padded
        )));
    }
    Ok((padded - effective) / stride + 1)
}

fn geometry(
    x: &Tensor,
    kernel: &Tensor,
    stride: usize,
    padding: usize,
    dilation: usize,
    groups: usize,
) -> Result<Geometry> {
    if x.rank() != 4 || kernel.rank() != 4 {
        return Err(Error::shape(format!(
            "conv2d: want NCHW input and OIHW kernel, got {:?} and {:?}",
            x.shape(),
            kernel.shape()
        )));
    }
    if stride == 0 || dilation == 0 || groups == 0 {
        return Err(Error::contract("conv2d: stride, dilation and groups must be nonzero"));
    }
    let (batch, c_in, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let (c_out, cg_in, kh, kw) =
        (kernel.shape()[0], kernel.shape()[1], kernel.shape()[2], kernel.shape()[3]);
    if c_in % groups != 0 || c_out % groups != 0 || cg_in != c_in / groups {
        return Err(Error::shape(format!(
            "conv2d: {} input channels / {} output channels incompatible with {} groups (kernel expects {} per group)",
            c_in, c_out, groups, cg_in
        )));
    }
    Ok(Geometry {
        batch,
        c_in,
        h,
        w,
        c_out,
        cg_in,
        kh,
        kw,
        h_out: out_extent(h, kh, stride, padding, dilation)?,
        w_out: out_extent(w, kw, stride, padding, dilation)?,
        out_per_group: c_out / groups,
    })
}

pub fn forward(
    x: &Tensor,
    kernel: &Tensor,
    stride: usize,
    padding: usize,
    dilation: usize,
    groups: usize,
) -> Result<(Tensor, Saved)> {
    let g = geometry(x, kernel, stride, padding, dilation, groups)?;
    let xd = x.data();
    let kd = kernel.data();
    let mut out = vec![0.0; g.batch * g.c_out * g.h_out * g.w_out];

    for b in 0..g.batch {
        for o in 0..g.c_out {
            let group = o / g.out_per_group;
            let c_base = group * g.cg_in;
            for oy in 0..g.h_out {
                for ox in 0..g.w_out {
                    let mut acc = 0.0;
                    for ic in 0..g.cg_in {
                        let x_plane = (b * g.c_in + c_base + ic) * g.h * g.w;
                        let k_plane = (o * g.cg_in + ic) * g.kh * g.kw;
                        for ky in 0..g.kh {
                            let iy = (oy * stride + ky * dilation) as isize - padding as isize;
                            if iy < 0 || iy >= g.h as isize {
                                continue;
                            }
                            for kx in 0..g.kw {
                                let ix = (ox * stride + kx * dilation) as isize - padding as isize;
                                if ix < 0 || ix >= g.w as isize {
                                    continue;
                                }
                                acc += xd[x_plane + iy as usize * g.w + ix as usize]
                                    * kd[k_plane + ky * g.kw + kx];
                            }
                        }
                    }
                    out[((b * g.c_out + o) * g.h_out + oy) * g.w_out + ox] = acc;
                }
            }
        }
    }

    Ok((
        Tensor::new(vec![g.batch, g.c_out, g.h_out, g.w_out], out)?,
        Saved::None,
    ))
}

pub fn backward(
    x: &Tensor,
    kernel: &Tensor,
    grad: &Tensor,
    stride: usize,
    padding: usize,
    dilation: usize,
    groups: usize,
) -> Result<Vec<Option<Tensor>>> {
    let g = geometry(x, kernel, stride, padding, dilation, groups)?;
    let xd = x.data();
    let kd = kernel.data();
    let gd = grad.data();
    let mut dx = vec![0.0; xd.len()];
    let mut dk = vec![0.0; kd.len()];

    // Scatter each output gradient back over its receptive field.
    for b in 0..g.batch {
        for o in 0..g.c_out {
            let group = o / g.out_per_group;
            let c_base = group * g.cg_in;
            for oy in 0..g.h_out {
                for ox in 0..g.w_out {
                    let go = gd[((b * g.c_out + o) * g.h_out + oy) * g.w_out + ox];
                    if go == 0.0 {
                        continue;
                    }
                    for ic in 0..g.cg_in {
                        let x_plane = (b * g.c_in + c_base + ic) * g.h * g.w;
                        let k_plane = (o * g.cg_in + ic) * g.kh * g.kw;
                        for ky in 0..g.kh {
                            let iy = (oy * stride + ky * dilation) as isize - padding as isize;
                            if iy < 0 || iy >= g.h as isize {
                                continue;
                            }
                            for kx in 0..g.kw {
                                let ix = (ox * stride + kx * dilation) as isize - padding as isize;
                                if ix < 0 || ix >= g.w as isize {
                                    continue;
                                }
                                let xi = x_plane + iy as usize * g.w + ix as usize;
                                let ki = k_plane + ky * g.kw + kx;
                                dx[xi] += go * kd[ki];
                                dk[ki] += go * xd[xi];
                            }
                        }
                    }
                }
            }
        }
    }

    Ok(vec![
        Some(Tensor::new(x.shape().to_vec(), dx)?),
        Some(Tensor::new(kernel.shape().to_vec(), dk)?),
    ])
}
