//! Central finite-difference validation of taped gradients.

use crate::error::{Error, Result};
use crate::tape::{Tape, Val};
use crate::tensor::Tensor;

/// Outcome of comparing an analytic gradient against central differences.
#[derive(Debug, Clone)]
pub struct GradcheckReport {
    /// Relative error per coordinate of the checked tensor.
    pub per_coord: Vec<f64>,
    pub max_rel_err: f64,
    pub worst_coord: usize,
    pub h: f64,
    pub tol: f64,
    pub pass: bool,
}

impl std::fmt::Display for GradcheckReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{}: max rel err {:.3e} at coord {} ({} coords, h={:.1e}, tol={:.1e})",
            if self.pass { "pass" } else { "FAIL" },
            self.max_rel_err,
            self.worst_coord,
            self.per_coord.len(),
            self.h,
            self.tol
        )
    }
}

/// Relative error with a unit floor, so tiny gradients are compared
/// absolutely and large ones relatively.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

/// Check the gradient of a scalar-valued tensor function at `point`.
///
/// `f` receives a fresh tape and the registered input and must return the
/// loss value. The analytic gradient from one backward pass is compared
/// against `(f(x + h e_i) - f(x - h e_i)) / 2h` per coordinate.
pub fn gradcheck<F>(f: F, point: &Tensor, h: f64, tol: f64) -> Result<GradcheckReport>
where
    F: Fn(&mut Tape, Val) -> Result<Val>,
{
    if h <= 0.0 || tol <= 0.0 {
        return Err(Error::contract("gradcheck: h and tol must be positive"));
    }

    let analytic = {
        let mut tape = Tape::new();
        let x = tape.leaf(point.clone().with_grad())?;
        let loss = f(&mut tape, x)?;
        if tape.value(loss).numel() != 1 {
            return Err(Error::contract("gradcheck: function must produce a scalar"));
        }
        let grads = tape.backward(loss)?;
        grads.expect_wrt(x)?.clone()
    };

    let eval = |data: &Tensor| -> Result<f64> {
        let mut tape = Tape::new();
        let x = tape.leaf(data.clone())?;
        let loss = f(&mut tape, x)?;
        tape.value(loss).item()
    };

    let mut per_coord = Vec::with_capacity(point.numel());
    let mut probe = point.clone();
    probe.requires_grad = false;
    for i in 0..point.numel() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let plus = eval(&probe)?;
        probe.data_mut()[i] = orig - h;
        let minus = eval(&probe)?;
        probe.data_mut()[i] = orig;
        let numeric = (plus - minus) / (2.0 * h);
        per_coord.push(rel_err(analytic.data()[i], numeric));
    }

    let (worst_coord, max_rel_err) = per_coord
        .iter()
        .enumerate()
        .fold((0, 0.0), |acc, (i, &e)| if e > acc.1 { (i, e) } else { acc });

    Ok(GradcheckReport {
        per_coord,
        max_rel_err,
        worst_coord,
        h,
        tol,
        pass: max_rel_err < tol,
    })
}

/// Central differences of an arbitrary scalar function of a flat parameter
/// vector. Building block for whole-model checks where parameters live in
/// several named tensors.
pub fn central_differences<F>(point: &[f64], h: f64, mut f: F) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let mut probe = point.to_vec();
    let mut out = Vec::with_capacity(point.len());
    for i in 0..point.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let plus = f(&probe)?;
        probe[i] = orig - h;
        let minus = f(&probe)?;
        probe[i] = orig;
        out.push((plus - minus) / (2.0 * h));
    }
    Ok(out)
}
