//! Max-shifted softmax and mean cross-entropy.

use crate::error::{Error, Result};
use crate::ops::Saved;
use crate::tensor::Tensor;

/// Numerically stable softmax of a slice: exponents are shifted by the
/// maximum before normalization. Shifted exponents are floored at the
/// smallest positive normal so every output stays strictly positive even
/// when score gaps exceed the exp underflow threshold.
pub fn stable_softmax(values: &[f64]) -> Vec<f64> {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = values
        .iter()
        .map(|v| (v - max).exp().max(f64::MIN_POSITIVE))
        .collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

pub fn forward(x: &Tensor) -> Result<(Tensor, Saved)> {
    if x.rank() != 1 || x.numel() == 0 {
        return Err(Error::shape(format!(
            "softmax: non-empty rank-1 input required, got {:?}",
            x.shape()
        )));
    }
    let probs = stable_softmax(x.data());
    Ok((Tensor::vector(&probs), Saved::None))
}

pub fn backward(output: &Tensor, grad: &Tensor) -> Result<Vec<Option<Tensor>>> {
    // dx_i = p_i * (g_i - <g, p>)
    let p = output.data();
    let g = grad.data();
    let dot: f64 = p.iter().zip(g).map(|(a, b)| a * b).sum();
    let dx: Vec<f64> = p.iter().zip(g).map(|(&pi, &gi)| pi * (gi - dot)).collect();
    Ok(vec![Some(Tensor::vector(&dx))])
}

pub fn cross_entropy_forward(logits: &Tensor, labels: &[usize]) -> Result<(Tensor, Saved)> {
    if logits.rank() != 2 {
        return Err(Error::shape(format!(
            "cross_entropy: rank-2 logits required, got {:?}",
            logits.shape()
        )));
    }
    let (rows, classes) = (logits.shape()[0], logits.shape()[1]);
    if labels.len() != rows {
        return Err(Error::contract(format!(
            "cross_entropy: {} labels for {} rows",
            labels.len(),
            rows
        )));
    }
    let mut probs = vec![0.0; rows * classes];
    let mut total = 0.0;
    for (r, &label) in labels.iter().enumerate() {
        if label >= classes {
            return Err(Error::contract(format!(
                "cross_entropy: label {} out of range for {} classes",
                label, classes
            )));
        }
        let row = &logits.data()[r * classes..(r + 1) * classes];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut lse = 0.0;
        for &v in row {
            lse += (v - max).exp();
        }
        let log_z = max + lse.ln();
        total += log_z - row[label];
        for (c, &v) in row.iter().enumerate() {
            probs[r * classes + c] = (v - max).exp() / lse;
        }
    }
    Ok((
        Tensor::scalar(total / rows as f64),
        Saved::Probs(Tensor::new(vec![rows, classes], probs)?),
    ))
}

pub fn cross_entropy_backward(
    logits: &Tensor,
    labels: &[usize],
    saved: &Saved,
    grad: &Tensor,
) -> Result<Vec<Option<Tensor>>> {
    let Saved::Probs(probs) = saved else {
        return Err(Error::contract("cross_entropy: missing saved probabilities"));
    };
    let (rows, classes) = (logits.shape()[0], logits.shape()[1]);
    let g = grad.data()[0] / rows as f64;
    let mut dx = probs.data().to_vec();
    for (r, &label) in labels.iter().enumerate() {
        dx[r * classes + label] -= 1.0;
    }
    for v in dx.iter_mut() {
        *v *= g;
    }
    Ok(vec![Some(Tensor::new(logits.shape().to_vec(), dx)?)])
}
