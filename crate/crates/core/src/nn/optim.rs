use super::param::{Param, Parameters};
use crate::{lit, Scalar};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// One bias-corrected Adam update of `param` at step `t` (`t >= 1`).
pub fn adam_step<T: Scalar>(param: &mut Param<T>, config: &AdamConfig, t: u64) {
    assert!(t >= 1, "adam step index starts at 1");
    let b1: T = lit(config.beta1);
    let b2: T = lit(config.beta2);
    let one = T::one();
    let bc1 = one - b1.powi(t as i32);
    let bc2 = one - b2.powi(t as i32);
    let lr: T = lit(config.lr);
    let eps: T = lit(config.eps);
    let Param { value, grad, m, v } = param;
    for (((x, g), m), v) in value.data_mut().iter_mut().zip(grad.iter()).zip(m.iter_mut()).zip(v.iter_mut()) {
        *m = b1 * *m + (one - b1) * *g;
        *v = b2 * *v + (one - b2) * *g * *g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *x -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}

#[derive(Clone, Debug)]
pub struct Adam {
    pub config: AdamConfig,
    t: u64,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self { config, t: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Applies one update to every parameter and clears the gradients.
    pub fn step<T: Scalar, P: Parameters<T> + ?Sized>(&mut self, model: &mut P) {
        self.t += 1;
        let (config, t) = (self.config, self.t);
        model.visit_mut(&mut |_, p| {
            adam_step(p, &config, t);
            p.zero_grad();
        });
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Sgd {
    pub lr: f64,
}

impl Sgd {
    pub fn step<T: Scalar, P: Parameters<T> + ?Sized>(&self, model: &mut P) {
        let lr: T = lit(self.lr);
        model.visit_mut(&mut |_, p| {
            let Param { value, grad, .. } = p;
            for (x, g) in value.data_mut().iter_mut().zip(grad.iter()) {
                *x -= lr * *g;
            }
            p.zero_grad();
        });
    }
}

/// Rescales all gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm<T: Scalar, P: Parameters<T> + ?Sized>(model: &mut P, max_norm: f64) -> f64 {
    let mut sq = 0.0;
    model.visit(&mut |_, p| {
        sq += p.grad.iter().map(|g| g.to_f64().unwrap_or(0.0).powi(2)).sum::<f64>();
    });
    let norm = sq.sqrt();
    if norm > max_norm && norm > 0.0 {
        let s: T = lit(max_norm / norm);
        model.visit_mut(&mut |_, p| p.grad.iter_mut().for_each(|g| *g *= s));
    }
    norm
}
