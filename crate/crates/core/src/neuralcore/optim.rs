use serde::{Deserialize, Serialize};

use super::ParamStore;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled L2 coefficient: each step also shrinks `w` by `lr * weight_decay * w`.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-4,
        }
    }
}

/// Adam with decoupled weight decay. Moment buffers are allocated lazily on
/// the first step and follow the store's parameter order.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Adam {
            config,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update from the accumulated gradients, then zeroes them.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        for p in store.iter() {
            if !p.grad.all_finite() {
                return Err(Error::NonFinite(format!("gradient of parameter '{}'", p.name)));
            }
        }
        if self.m.len() != store.len() {
            self.m = store.iter().map(|p| vec![0.0; p.value.len()]).collect();
            self.v = self.m.clone();
        }
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for ((p, m), v) in store.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            let grads = p.grad.data().to_vec();
            for (((w, g), mi), vi) in p
                .value
                .data_mut()
                .iter_mut()
                .zip(grads)
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                *mi = beta1 * *mi + (1.0 - beta1) * g;
                *vi = beta2 * *vi + (1.0 - beta2) * g * g;
                let update = (*mi / bc1) / ((*vi / bc2).sqrt() + eps);
                *w -= lr * weight_decay * *w + lr * update;
            }
            p.grad.fill(0.0);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neuralcore::Tensor;

    fn store_with(values: Vec<f64>) -> (ParamStore, crate::neuralcore::ParamId) {
        let mut s = ParamStore::new();
        let id = s.add("w", Tensor::vector(values)).unwrap();
        (s, id)
    }

    #[test]
    fn zero_grad_no_decay_is_noop() {
        let (mut s, id) = store_with(vec![0.5, -2.0]);
        let mut opt = Adam::new(AdamConfig {
            weight_decay: 0.0,
            ..AdamConfig::default()
        });
        opt.step(&mut s).unwrap();
        assert_eq!(s.value(id).data(), &[0.5, -2.0]);
    }

    #[test]
    fn zero_grad_with_decay_shrinks() {
        let (mut s, id) = store_with(vec![0.5, -2.0]);
        let cfg = AdamConfig {
            lr: 0.01,
            weight_decay: 0.1,
            ..AdamConfig::default()
        };
        let mut opt = Adam::new(cfg);
        opt.step(&mut s).unwrap();
        let f = 1.0 - 0.01 * 0.1;
        assert_eq!(s.value(id).data(), &[0.5 - 0.01 * 0.1 * 0.5, -2.0 + 0.01 * 0.1 * 2.0]);
        assert!((s.value(id).data()[0] - 0.5 * f).abs() < 1e-15);
    }

    #[test]
    fn nan_gradient_names_parameter() {
        let (mut s, id) = store_with(vec![1.0]);
        s.grad_mut(id).data_mut()[0] = f64::NAN;
        let err = Adam::new(AdamConfig::default()).step(&mut s).unwrap_err();
        assert!(err.to_string().contains("'w'"));
    }

    #[test]
    fn quadratic_bowl_converges() {
        let (mut s, id) = store_with(vec![1.0]);
        let mut opt = Adam::new(AdamConfig {
            lr: 0.1,
            weight_decay: 0.0,
            ..AdamConfig::default()
        });
        for _ in 0..500 {
            let w = s.value(id).data()[0];
            s.grad_mut(id).data_mut()[0] = 2.0 * w;
            opt.step(&mut s).unwrap();
        }
        let w = s.value(id).data()[0];
        assert!(w.abs() < 1e-3, "w = {w}");
    }

    #[test]
    fn grads_zeroed_after_step() {
        let (mut s, id) = store_with(vec![1.0]);
        s.grad_mut(id).data_mut()[0] = 3.0;
        Adam::new(AdamConfig::default()).step(&mut s).unwrap();
        assert_eq!(s.grad(id).data(), &[0.0]);
    }
}
