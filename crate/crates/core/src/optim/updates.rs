//! In-place parameter update rules.

use stretchnas_autodiff::Tensor;

/// Adam hyperparameters for the architecture scores.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamHyper {
    /// Standard settings for architecture scores at the given learning rate.
    pub fn arch(lr: f64) -> Self {
        AdamHyper {
            lr,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One Adam step with bias correction; `t` is the 1-based step count.
pub fn adam_update(
    param: &mut Tensor,
    grad: &Tensor,
    m: &mut Tensor,
    v: &mut Tensor,
    t: u64,
    hp: &AdamHyper,
) {
    debug_assert!(t >= 1);
    let bc1 = 1.0 - hp.beta1.powi(t as i32);
    let bc2 = 1.0 - hp.beta2.powi(t as i32);
    for (((w, &g), mi), vi) in param
        .data_mut()
        .iter_mut()
        .zip(grad.data())
        .zip(m.data_mut().iter_mut())
        .zip(v.data_mut().iter_mut())
    {
        *mi = hp.beta1 * *mi + (1.0 - hp.beta1) * g;
        *vi = hp.beta2 * *vi + (1.0 - hp.beta2) * g * g;
        let m_hat = *mi / bc1;
        let v_hat = *vi / bc2;
        *w -= hp.lr * m_hat / (v_hat.sqrt() + hp.eps);
    }
}

/// SGD-with-momentum hyperparameters for the network weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdHyper {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

/// One momentum step: the velocity accumulates the decayed gradient and the
/// parameter moves against it.
pub fn sgd_update(param: &mut Tensor, grad: &Tensor, vel: &mut Tensor, hp: &SgdHyper) {
    for ((w, &g), v) in param
        .data_mut()
        .iter_mut()
        .zip(grad.data())
        .zip(vel.data_mut().iter_mut())
    {
        let g = g + hp.weight_decay * *w;
        *v = hp.momentum * *v + g;
        *w -= hp.lr * *v;
    }
}

/// Cosine annealing from `base` at epoch 0 toward 0 at `total` epochs.
pub fn cosine_lr(base: f64, epoch: usize, total: usize) -> f64 {
    if total == 0 {
        return base;
    }
    let frac = (epoch.min(total)) as f64 / total as f64;
    base * 0.5 * (1.0 + (std::f64::consts::PI * frac).cos())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adam_with_zero_lr_leaves_parameters_untouched() {
        let mut p = Tensor::vector(&[1.0, -2.0, 3.0]);
        let g = Tensor::vector(&[0.5, 0.5, -0.5]);
        let mut m = Tensor::zeros(&[3]);
        let mut v = Tensor::zeros(&[3]);
        adam_update(&mut p, &g, &mut m, &mut v, 1, &AdamHyper::arch(0.0));
        assert_eq!(p.data(), &[1.0, -2.0, 3.0]);
        assert!(m.data().iter().any(|&x| x != 0.0));
    }

    #[test]
    fn adam_first_step_moves_by_lr_in_gradient_sign() {
        let mut p = Tensor::vector(&[0.0]);
        let g = Tensor::vector(&[3.0]);
        let mut m = Tensor::zeros(&[1]);
        let mut v = Tensor::zeros(&[1]);
        let hp = AdamHyper::arch(0.01);
        adam_update(&mut p, &g, &mut m, &mut v, 1, &hp);
        // After bias correction the first step is -lr * g / (|g| + eps).
        let expected = -0.01 * 3.0 / (3.0 + 1e-8);
        assert!((p.data()[0] - expected).abs() <= 1e-12);
    }

    #[test]
    fn sgd_momentum_accumulates_velocity() {
        let mut p = Tensor::vector(&[1.0]);
        let g = Tensor::vector(&[1.0]);
        let mut v = Tensor::zeros(&[1]);
        let hp = SgdHyper {
            lr: 0.1,
            momentum: 0.9,
            weight_decay: 0.0,
        };
        sgd_update(&mut p, &g, &mut v, &hp);
        assert!((p.data()[0] - 0.9).abs() <= 1e-12);
        sgd_update(&mut p, &g, &mut v, &hp);
        // Velocity is now 0.9 * 1 + 1 = 1.9, so the step is 0.19.
        assert!((p.data()[0] - 0.71).abs() <= 1e-12);
    }

    #[test]
    fn weight_decay_pulls_toward_zero_with_zero_gradient() {
        let mut p = Tensor::vector(&[2.0]);
        let g = Tensor::vector(&[0.0]);
        let mut v = Tensor::zeros(&[1]);
        let hp = SgdHyper {
            lr: 0.1,
            momentum: 0.0,
            weight_decay: 0.5,
        };
        sgd_update(&mut p, &g, &mut v, &hp);
        assert!((p.data()[0] - 1.9).abs() <= 1e-12);
    }

    #[test]
    fn cosine_schedule_hits_endpoints() {
        assert!((cosine_lr(0.4, 0, 10) - 0.4).abs() <= 1e-15);
        assert!((cosine_lr(0.4, 10, 10)).abs() <= 1e-15);
        let mid = cosine_lr(0.4, 5, 10);
        assert!((mid - 0.2).abs() <= 1e-12);
        assert!(cosine_lr(0.4, 3, 10) > cosine_lr(0.4, 7, 10));
    }
}
