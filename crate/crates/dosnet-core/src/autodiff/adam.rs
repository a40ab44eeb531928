//! Adam optimizer with bias correction, L2 weight decay folded into the
//! gradient, and the step-decay learning-rate schedule.

use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{DosnetError, Result};

/// Per-parameter first/second moment estimates plus the shared step
/// counter and hyperparameters. Complex parameters are treated as pairs of
/// independent real scalars.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// L2 regularization coefficient, added as `grad += l2 * param`
    /// before the moment updates.
    pub l2: f64,
    pub t: u64,
    moments: Vec<Moment>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Moment {
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    pub fn new(lr: f64, l2: f64) -> AdamState {
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            l2,
            t: 0,
            moments: Vec::new(),
        }
    }

    /// Single Adam update over a parameter list and matching gradients.
    /// Moment buffers are allocated lazily on the first step.
    pub fn step(&mut self, params: &mut [Tensor], grads: &[Tensor]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(DosnetError::dim("adam: params/grads length mismatch"));
        }
        if self.moments.is_empty() {
            self.moments = params
                .iter()
                .map(|p| Moment {
                    m: vec![0.0; p.real_scalar_count()],
                    v: vec![0.0; p.real_scalar_count()],
                })
                .collect();
        }
        if self.moments.len() != params.len() {
            return Err(DosnetError::dim("adam: state does not match param count"));
        }
        self.t += 1;
        let t = self.t as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for ((p, g), mom) in params.iter_mut().zip(grads).zip(&mut self.moments) {
            let count = p.real_scalar_count();
            if g.real_scalar_count() != count || g.shape() != p.shape() {
                return Err(DosnetError::dim("adam: grad shape mismatch"));
            }
            for i in 0..count {
                let grad = g.real_scalar(i) + self.l2 * p.real_scalar(i);
                mom.m[i] = self.beta1 * mom.m[i] + (1.0 - self.beta1) * grad;
                mom.v[i] = self.beta2 * mom.v[i] + (1.0 - self.beta2) * grad * grad;
                let m_hat = mom.m[i] / bc1;
                let v_hat = mom.v[i] / bc2;
                let update = self.lr * m_hat / (v_hat.sqrt() + self.eps);
                p.set_real_scalar(i, p.real_scalar(i) - update);
            }
        }
        Ok(())
    }
}

/// Step-decay schedule: the learning rate drops to 10% of its value every
/// 30 epochs, `lr = base * 0.1^floor(epoch / 30)`.
pub fn lr_schedule(base_lr: f64, epoch: usize) -> f64 {
    base_lr * 0.1_f64.powi((epoch / 30) as i32)
}
