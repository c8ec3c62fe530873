//! Parameter updates applied after gradient modulation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{ParamStore, Tensor};

/// Exponentially averaged gradient descent:
/// `m_t = β m_{t−1} + (1 − β) g̃_t`, `θ ← θ − η m_t`.
#[derive(Debug, Clone)]
pub struct MomentumState {
    pub beta: f64,
    pub learning_rate: f64,
    velocity: Vec<Tensor>,
}

impl MomentumState {
    pub fn new(beta: f64, learning_rate: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&beta) {
            return Err(Error::Config(format!("momentum beta must be in [0, 1), got {beta}")));
        }
        if !(learning_rate > 0.0) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {learning_rate}"
            )));
        }
        Ok(Self {
            beta,
            learning_rate,
            velocity: Vec::new(),
        })
    }

    pub fn velocity(&self) -> &[Tensor] {
        &self.velocity
    }

    /// Updates every parameter in `store` and zeroes its gradient.
    pub fn step(&mut self, store: &mut ParamStore) {
        if self.velocity.len() != store.len() {
            self.velocity = store.iter().map(|p| Tensor::zeros(p.value.shape())).collect();
        }
        let (beta, lr) = (self.beta, self.learning_rate);
        for (p, v) in store.iter_mut().zip(&mut self.velocity) {
            let (values, grads) = p.value_and_grad();
            for ((m, &g), theta) in v.data_mut().iter_mut().zip(grads).zip(values) {
                *m = beta * *m + (1.0 - beta) * g;
                *theta -= lr * *m;
            }
            p.zero_grad();
        }
    }
}

/// Adam with decoupled weight decay and bias correction.
#[derive(Debug, Clone)]
pub struct AdamWState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    step: u64,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
}

impl AdamWState {
    pub fn new(learning_rate: f64, beta1: f64, beta2: f64, eps: f64, weight_decay: f64) -> Result<Self> {
        if !(learning_rate > 0.0) || !(eps > 0.0) || !(weight_decay >= 0.0) {
            return Err(Error::Config(format!(
                "invalid AdamW settings: lr {learning_rate}, eps {eps}, decay {weight_decay}"
            )));
        }
        for b in [beta1, beta2] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Config(format!("AdamW beta must be in [0, 1), got {b}")));
            }
        }
        Ok(Self {
            learning_rate,
            beta1,
            beta2,
            eps,
            weight_decay,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        })
    }

    pub fn with_defaults(learning_rate: f64) -> Result<Self> {
        Self::new(learning_rate, 0.9, 0.999, 1e-8, 0.01)
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, store: &mut ParamStore) {
        if self.first.len() != store.len() {
            self.first = store.iter().map(|p| Tensor::zeros(p.value.shape())).collect();
            self.second = self.first.clone();
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (lr, b1, b2, eps) = (self.learning_rate, self.beta1, self.beta2, self.eps);
        let decay = 1.0 - lr * self.weight_decay;
        for ((p, m), v) in store.iter_mut().zip(&mut self.first).zip(&mut self.second) {
            let (values, grads) = p.value_and_grad();
            for (((theta, &g), m), v) in values
                .iter_mut()
                .zip(grads)
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *theta *= decay;
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *theta -= lr * m_hat / (v_hat.sqrt() + eps);
            }
            p.zero_grad();
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerConfig {
    Momentum {
        learning_rate: f64,
        beta: f64,
    },
    AdamW {
        learning_rate: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
        weight_decay: f64,
    },
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig::AdamW {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

impl OptimizerConfig {
    pub fn build(&self) -> Result<Optimizer> {
        Ok(match *self {
            OptimizerConfig::Momentum {
                learning_rate,
                beta,
            } => Optimizer::Momentum(MomentumState::new(beta, learning_rate)?),
            OptimizerConfig::AdamW {
                learning_rate,
                beta1,
                beta2,
                eps,
                weight_decay,
            } => Optimizer::AdamW(AdamWState::new(learning_rate, beta1, beta2, eps, weight_decay)?),
        })
    }
}

#[derive(Debug, Clone)]
pub enum Optimizer {
    Momentum(MomentumState),
    AdamW(AdamWState),
}

impl Optimizer {
    /// Consumes the accumulated (already modulated) gradients and zeroes them.
    pub fn step(&mut self, store: &mut ParamStore) {
        match self {
            Optimizer::Momentum(s) => s.step(store),
            Optimizer::AdamW(s) => s.step(store),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_store(value: f64) -> (ParamStore, crate::tensor::ParamId) {
        let mut store = ParamStore::new();
        let id = store.add("w", Tensor::scalar(value));
        (store, id)
    }

    fn set_grad(store: &mut ParamStore, id: crate::tensor::ParamId, g: f64) {
        store.get_mut(id).grad_mut()[0] = g;
    }

    #[test]
    fn momentum_geometric_sequence() {
        let (mut store, id) = scalar_store(0.0);
        let mut opt = MomentumState::new(0.9, 1.0).unwrap();
        let expected = [0.1, 0.19, 0.271];
        for e in expected {
            set_grad(&mut store, id, 1.0);
            opt.step(&mut store);
            assert!((opt.velocity()[0].item() - e).abs() < 1e-15);
        }
        assert_eq!(store.grad(id).item(), 0.0);
    }

    #[test]
    fn momentum_zero_gradient_keeps_parameters() {
        let (mut store, id) = scalar_store(1.25);
        let mut opt = MomentumState::new(0.9, 0.1).unwrap();
        for _ in 0..10 {
            opt.step(&mut store);
        }
        assert_eq!(store.value(id).item(), 1.25);
    }

    #[test]
    fn momentum_rejects_beta_one() {
        assert!(MomentumState::new(1.0, 0.1).is_err());
    }

    /// Hand-rolled reference of the bias-corrected adaptive-moment update.
    fn adam_reference(theta0: f64, grads: &[f64], lr: f64) -> f64 {
        let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
        let (mut m, mut v, mut theta) = (0.0, 0.0, theta0);
        for (t, &g) in grads.iter().enumerate() {
            let t = (t + 1) as i32;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            theta -= lr * (m / (1.0 - b1.powi(t))) / ((v / (1.0 - b2.powi(t))).sqrt() + eps);
        }
        theta
    }

    #[test]
    fn adamw_first_step_is_learning_rate() {
        let (mut store, id) = scalar_store(0.5);
        let mut opt = AdamWState::new(1e-3, 0.9, 0.999, 1e-8, 0.0).unwrap();
        set_grad(&mut store, id, 3.0);
        opt.step(&mut store);
        let moved = 0.5 - store.value(id).item();
        assert!((moved - 1e-3).abs() < 1e-10, "{moved}");
    }

    #[test]
    fn adamw_matches_reference_without_decay() {
        let grads = [0.4, -1.3, 2.2];
        let (mut store, id) = scalar_store(0.7);
        let mut opt = AdamWState::new(0.01, 0.9, 0.999, 1e-8, 0.0).unwrap();
        for g in grads {
            set_grad(&mut store, id, g);
            opt.step(&mut store);
        }
        let expected = adam_reference(0.7, &grads, 0.01);
        assert!((store.value(id).item() - expected).abs() < 1e-15);
    }

    #[test]
    fn adamw_zero_gradient_zero_decay_is_still() {
        let (mut store, id) = scalar_store(-2.0);
        let mut opt = AdamWState::new(0.01, 0.9, 0.999, 1e-8, 0.0).unwrap();
        for _ in 0..5 {
            opt.step(&mut store);
        }
        assert_eq!(store.value(id).item(), -2.0);
    }

    #[test]
    fn adamw_decay_shrinks_without_gradient() {
        let (mut store, id) = scalar_store(2.0);
        let mut opt = AdamWState::with_defaults(0.1).unwrap();
        opt.step(&mut store);
        assert!((store.value(id).item() - 2.0 * (1.0 - 0.1 * 0.01)).abs() < 1e-15);
    }
}
