//! Elementwise and small-vector primitives.

use crate::error::{Error, Result};
use crate::ops::{OpKind, Saved};
use crate::tensor::Tensor;

fn same_shape(op: &OpKind, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(format!(
            "{}: operand shapes differ: {:?} vs {:?}",
            op.name(),
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

pub fn binary_forward(op: &OpKind, a: &Tensor, b: &Tensor) -> Result<(Tensor, Saved)> {
    same_shape(op, a, b)?;
    let data: Vec<f64> = match op {
        OpKind::Add => a.data().iter().zip(b.data()).map(|(x, y)| x + y).collect(),
        OpKind::Sub => a.data().iter().zip(b.data()).map(|(x, y)| x - y).collect(),
        OpKind::Mul => a.data().iter().zip(b.data()).map(|(x, y)| x * y).collect(),
        OpKind::Div => a.data().iter().zip(b.data()).map(|(x, y)| x / y).collect(),
        _ => unreachable!(),
    };
    Ok((Tensor::new(a.shape().to_vec(), data)?, Saved::None))
}

pub fn binary_backward(
    op: &OpKind,
    a: &Tensor,
    b: &Tensor,
    grad: &Tensor,
) -> Result<Vec<Option<Tensor>>> {
    let g = grad.data();
    let (da, db): (Vec<f64>, Vec<f64>) = match op {
        OpKind::Add => (g.to_vec(), g.to_vec()),
        OpKind::Sub => (g.to_vec(), g.iter().map(|v| -v).collect()),
        OpKind::Mul => (
            g.iter().zip(b.data()).map(|(g, y)| g * y).collect(),
            g.iter().zip(a.data()).map(|(g, x)| g * x).collect(),
        ),
        OpKind::Div => (
            // y = a / b  =>  dy/da = 1/b, dy/db = -a/b^2
            g.iter().zip(b.data()).map(|(g, y)| g / y).collect(),
            g.iter()
                .zip(a.data().iter().zip(b.data()))
                .map(|(g, (x, y))| -g * x / (y * y))
                .collect(),
        ),
        _ => unreachable!(),
    };
    Ok(vec![
        Some(Tensor::new(a.shape().to_vec(), da)?),
        Some(Tensor::new(b.shape().to_vec(), db)?),
    ])
}

pub fn smul_forward(x: &Tensor, factor: f64) -> Result<(Tensor, Saved)> {
    Ok((x.map(|v| v * factor), Saved::None))
}

pub fn smul_backward(grad: &Tensor, factor: f64) -> Result<Vec<Option<Tensor>>> {
    Ok(vec![Some(grad.map(|g| g * factor))])
}

pub fn scale_forward(x: &Tensor, s: &Tensor) -> Result<(Tensor, Saved)> {
    if s.numel() != 1 {
        return Err(Error::shape(format!(
            "scale: second operand must have one element, got shape {:?}",
            s.shape()
        )));
    }
    let f = s.data()[0];
    Ok((x.map(|v| v * f), Saved::None))
}

pub fn scale_backward(x: &Tensor, s: &Tensor, grad: &Tensor) -> Result<Vec<Option<Tensor>>> {
    let f = s.data()[0];
    let dx = grad.map(|g| g * f);
    let ds: f64 = grad.data().iter().zip(x.data()).map(|(g, v)| g * v).sum();
    Ok(vec![Some(dx), Some(Tensor::new(s.shape().to_vec(), vec![ds])?)])
}

pub fn index_forward(x: &Tensor, index: usize) -> Result<(Tensor, Saved)> {
    if x.rank() != 1 {
        return Err(Error::shape(format!("index: rank-1 input required, got {:?}", x.shape())));
    }
    if index >= x.numel() {
        return Err(Error::contract(format!(
            "index {} out of bounds for length {}",
            index,
            x.numel()
        )));
    }
    Ok((Tensor::scalar(x.data()[index]), Saved::None))
}

pub fn index_backward(x: &Tensor, index: usize, grad: &Tensor) -> Result<Vec<Option<Tensor>>> {
    let mut dx = Tensor::zeros(x.shape());
    dx.data_mut()[index] = grad.data()[0];
    Ok(vec![Some(dx)])
}

pub fn weighted_sum_forward(x: &Tensor, weights: &[f64]) -> Result<(Tensor, Saved)> {
    if x.rank() != 1 || x.numel() != weights.len() {
        return Err(Error::shape(format!(
            "weighted_sum: rank-1 input of length {} required, got {:?}",
            weights.len(),
            x.shape()
        )));
    }
    let v: f64 = x.data().iter().zip(weights).map(|(a, w)| a * w).sum();
    Ok((Tensor::scalar(v), Saved::None))
}

pub fn weighted_sum_backward(weights: &[f64], grad: &Tensor) -> Result<Vec<Option<Tensor>>> {
    let g = grad.data()[0];
    Ok(vec![Some(Tensor::vector(&weights.iter().map(|w| w * g).collect::<Vec<_>>()))])
}

pub fn masked_max_forward(x: &Tensor, mask: &[bool]) -> Result<(Tensor, Saved)> {
    if x.rank() != 1 || x.numel() != mask.len() {
        return Err(Error::shape(format!(
            "masked_max: rank-1 input of length {} required, got {:?}",
            mask.len(),
            x.shape()
        )));
    }
    let mut best: Option<(usize, f64)> = None;
    for (i, (&v, &m)) in x.data().iter().zip(mask).enumerate() {
        if m {
            // Strict comparison keeps the lowest index on ties.
            match best {
                Some((_, bv)) if v <= bv => {}
                _ => best = Some((i, v)),
            }
        }
    }
    let (idx, v) = best.ok_or_else(|| Error::contract("masked_max: empty mask"))?;
    Ok((Tensor::scalar(v), Saved::Indices(vec![idx])))
}

pub fn masked_max_backward(
    x: &Tensor,
    saved: &Saved,
    grad: &Tensor,
) -> Result<Vec<Option<Tensor>>> {
    let Saved::Indices(idx) = saved else {
        return Err(Error::contract("masked_max: missing saved index"));
    };
    let mut dx = Tensor::zeros(x.shape());
    dx.data_mut()[idx[0]] = grad.data()[0];
    Ok(vec![Some(dx)])
}

pub fn relu_forward(x: &Tensor) -> Result<(Tensor, Saved)> {
    Ok((x.map(|v| v.max(0.0)), Saved::None))
}

pub fn relu_backward(x: &Tensor, grad: &Tensor) -> Result<Vec<Option<Tensor>>> {
    let dx: Vec<f64> = x
        .data()
        .iter()
        .zip(grad.data())
        .map(|(&v, &g)| if v > 0.0 { g } else { 0.0 })
        .collect();
    Ok(vec![Some(Tensor::new(x.shape().to_vec(), dx)?)])
}

pub fn log_forward(x: &Tensor) -> Result<(Tensor, Saved)> {
    Ok((x.map(f64::ln), Saved::None))
}

pub fn log_backward(x: &Tensor, grad: &Tensor) -> Result<Vec<Option<Tensor>>> {
    let dx: Vec<f64> = x.data().iter().zip(grad.data()).map(|(&v, &g)| g / v).collect();
    Ok(vec![Some(Tensor::new(x.shape().to_vec(), dx)?)])
}

pub fn exp_forward(x: &Tensor) -> Result<(Tensor, Saved)> {
    Ok((x.map(f64::exp), Saved::None))
}

pub fn exp_backward(output: &Tensor, grad: &Tensor) -> Result<Vec<Option<Tensor>>> {
    let dx: Vec<f64> = output.data().iter().zip(grad.data()).map(|(&y, &g)| g * y).collect();
    Ok(vec![Some(Tensor::new(output.shape().to_vec(), dx)?)])
}

pub fn bias_add_forward(x: &Tensor, b: &Tensor) -> Result<(Tensor, Saved)> {
    if x.rank() != 2 || b.rank() != 1 || x.shape()[1] != b.shape()[0] {
        return Err(Error::shape(format!(
            "bias_add: want [n, k] + [k], got {:?} + {:?}",
            x.shape(),
            b.shape()
        )));
    }
    let k = b.numel();
    let mut data = x.data().to_vec();
    for (i, v) in data.iter_mut().enumerate() {
        *v += b.data()[i % k];
    }
    Ok((Tensor::new(x.shape().to_vec(), data)?, Saved::None))
}

pub fn bias_add_backward(x: &Tensor, b: &Tensor, grad: &Tensor) -> Result<Vec<Option<Tensor>>> {
    let k = b.numel();
    let mut db = vec![0.0; k];
    for (i, g) in grad.data().iter().enumerate() {
        db[i % k] += g;
    }
    Ok(vec![Some(grad.clone()), Some(Tensor::new(x.shape()[1..].to_vec(), db)?)])
}
