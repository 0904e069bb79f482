//! ADAM optimizer and plateau learning-rate scheduler.

use super::{Gradient, Mlp};

/// ADAM with bias-corrected first and second moments. Moment state is kept
/// in `f64`; parameter updates are computed in `f64` and stored back as
/// `f32`.
#[derive(Debug, Clone)]
pub struct Adam {
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: u64,
    m: Gradient,
    v: Gradient,
}

impl Adam {
    pub fn new(mlp: &Mlp, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            beta1,
            beta2,
            eps,
            t: 0,
            m: Gradient::zeros_like(mlp),
            v: Gradient::zeros_like(mlp),
        }
    }

    /// One update step with learning rate `lr`.
    pub fn step(&mut self, mlp: &mut Mlp, grad: &Gradient, lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (l, layer) in mlp.layers.iter_mut().enumerate() {
            update_slice(
                &mut layer.weights,
                &grad.weights[l],
                &mut self.m.weights[l],
                &mut self.v.weights[l],
                self.beta1,
                self.beta2,
                self.eps,
                lr,
                bc1,
                bc2,
            );
            update_slice(
                &mut layer.biases,
                &grad.biases[l],
                &mut self.m.biases[l],
                &mut self.v.biases[l],
                self.beta1,
                self.beta2,
                self.eps,
                lr,
                bc1,
                bc2,
            );
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn update_slice(
    params: &mut [f32],
    grad: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    beta1: f64,
    beta2: f64,
    eps: f64,
    lr: f64,
    bc1: f64,
    bc2: f64,
) {
    for i in 0..params.len() {
        let g = grad[i];
        m[i] = beta1 * m[i] + (1.0 - beta1) * g;
        v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        params[i] = (params[i] as f64 - lr * m_hat / (v_hat.sqrt() + eps)) as f32;
    }
}

/// Halves the learning rate when the observed metric fails to improve on
/// its best value for `patience` consecutive observations.
#[derive(Debug, Clone)]
pub struct PlateauScheduler {
    lr: f64,
    patience: usize,
    best: Option<f64>,
    bad_epochs: usize,
}

impl PlateauScheduler {
    pub fn new(initial_lr: f64, patience: usize) -> Self {
        Self {
            lr: initial_lr,
            patience,
            best: None,
            bad_epochs: 0,
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    /// Feeds one epoch's metric (higher is better); adjusts the rate used
    /// from the next epoch on.
    pub fn observe(&mut self, metric: f64) {
        if self.best.is_none_or(|b| metric > b) {
            self.best = Some(metric);
            self.bad_epochs = 0;
        } else {
            self.bad_epochs += 1;
            if self.bad_epochs >= self.patience {
                self.lr *= 0.5;
                self.bad_epochs = 0;
            }
        }
    }
}
