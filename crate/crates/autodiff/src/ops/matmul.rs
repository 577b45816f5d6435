//! Dense matrix multiplication.

use crate::error::{Error, Result};
use crate::ops::Saved;
use crate::tensor::Tensor;

pub fn forward(a: &Tensor, b: &Tensor) -> Result<(Tensor, Saved)> {
    if a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0] {
        return Err(Error::shape(format!(
            "matmul: want [m, k] x [k, n], got {:?} x {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let (m, k) = (a.shape()[0], a.shape()[1]);
    let n = b.shape()[1];
    let mut out = vec![0.0; m * n];
    let ad = a.data();
    let bd = b.data();
    for i in 0..m {
        for p in 0..k {
            let av = ad[i * k + p];
            let brow = &bd[p * n..(p + 1) * n];
            let orow = &mut out[i * n..(i + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    Ok((Tensor::new(vec![m, n], out)?, Saved::None))
}

pub fn backward(a: &Tensor, b: &Tensor, grad: &Tensor) -> Result<Vec<Option<Tensor>>> {
    let (m, k) = (a.shape()[0], a.shape()[1]);
    let n = b.shape()[1];
    let ad = a.data();
    let bd = b.data();
    let gd = grad.data();

    // dA = G * B^T
    let mut da = vec![0.0; m * k];
    for i in 0..m {
        for p in 0..k {
            let mut acc = 0.0;
            let grow = &gd[i * n..(i + 1) * n];
            let brow = &bd[p * n..(p + 1) * n];
            for (&g, &bv) in grow.iter().zip(brow) {
                acc += g * bv;
            }
            da[i * k + p] = acc;
        }
    }

    // dB = A^T * G
    let mut db = vec![0.0; k * n];
    for i in 0..m {
        for p in 0..k {
            let av = ad[i * k + p];
            let grow = &gd[i * n..(i + 1) * n];
            let brow = &mut db[p * n..(p + 1) * n];
            for (o, &g) in brow.iter_mut().zip(grow) {
                *o += av * g;
            }
        }
    }

    Ok(vec![
        Some(Tensor::new(vec![m, k], da)?),
        Some(Tensor::new(vec![k, n], db)?),
    ])
}
