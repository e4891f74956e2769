use serde::{Deserialize, Serialize};

use crate::param::Param;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// Adam with optional L2 weight decay folded into the gradient.
///
/// Moment buffers are positional: the optimizer must always be stepped with
/// the trainable parameters of the same model in the same order.
#[derive(Debug, Clone)]
pub struct Adam {
    config: AdamConfig,
    step: u64,
    first: Vec<Vec<f32>>,
    second: Vec<Vec<f32>>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One update of every trainable parameter at learning rate `lr`.
    pub fn step(&mut self, params: &mut [&mut Param], lr: f64) {
        let trainable: Vec<&mut &mut Param> = params.iter_mut().filter(|p| p.is_trainable()).collect();
        if self.first.is_empty() {
            self.first = trainable.iter().map(|p| vec![0.0; p.len()]).collect();
            self.second = trainable.iter().map(|p| vec![0.0; p.len()]).collect();
        }
        assert_eq!(self.first.len(), trainable.len(), "optimizer bound to a different model");
        self.step += 1;
        let AdamConfig {
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.config;
        let bias1 = 1.0 - beta1.powi(self.step as i32);
        let bias2 = 1.0 - beta2.powi(self.step as i32);
        let step_size = (lr / bias1) as f32;
        let (b1, b2, eps, wd) = (beta1 as f32, beta2 as f32, eps as f32, weight_decay as f32);
        let inv_bias2_sqrt = (1.0 / bias2.sqrt()) as f32;
        for ((p, m), v) in trainable.into_iter().zip(&mut self.first).zip(&mut self.second) {
            let (value, grad) = p.value_and_grad_mut();
            for i in 0..value.len() {
                let g = grad[i] + wd * value[i];
                m[i] = b1 * m[i] + (1.0 - b1) * g;
                v[i] = b2 * v[i] + (1.0 - b2) * g * g;
                value[i] -= step_size * m[i] / (v[i].sqrt() * inv_bias2_sqrt + eps);
            }
        }
    }

    /// `(step, first moments, second moments)` for checkpointing.
    pub fn state(&self) -> (u64, &[Vec<f32>], &[Vec<f32>]) {
        (self.step, &self.first, &self.second)
    }

    pub fn restore(config: AdamConfig, step: u64, first: Vec<Vec<f32>>, second: Vec<Vec<f32>>) -> Self {
        assert_eq!(first.len(), second.len());
        Self {
            config,
            step,
            first,
            second,
        }
    }
}
