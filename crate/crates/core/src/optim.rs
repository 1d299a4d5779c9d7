use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Bias-corrected adaptive-moment optimizer.
///
/// Moments are keyed by tensor identity, so one `Adam` can drive any fixed
/// set of parameter tensors.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    moments: HashMap<usize, (Vec<f64>, Vec<f64>)>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self::with_betas(lr, 0.9, 0.999, 1e-8)
    }

    pub fn with_betas(lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Adam { lr, beta1, beta2, eps, step: 0, moments: HashMap::new() }
    }

    /// Number of updates applied so far.
    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One update of every parameter holding a gradient. Parameters without a
    /// gradient are left alone; if none has one the call is a usage error.
    pub fn step(&mut self, params: &[Tensor]) -> Result<()> {
        if !params.iter().any(|p| p.grad().is_some()) {
            return Err(Error::usage("optimizer step before any backward pass"));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for p in params {
            let Some(g) = p.grad() else { continue };
            let (m, v) = self
                .moments
                .entry(p.id())
                .or_insert_with(|| (vec![0.0; g.len()], vec![0.0; g.len()]));
            let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
            p.update(|data| {
                for i in 0..data.len() {
                    m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                    v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                    let mhat = m[i] / c1;
                    let vhat = v[i] / c2;
                    data[i] -= lr * mhat / (vhat.sqrt() + eps);
                }
            });
        }
        Ok(())
    }
}

pub fn zero_grads(params: &[Tensor]) {
    params.iter().for_each(Tensor::zero_grad);
}
