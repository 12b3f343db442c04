//! Adam with decoupled weight decay, plus the cosine learning-rate schedule.

use serde::{Deserialize, Serialize};

use super::params::ParamSet;
use crate::error::{invalid_argument, Error, Result};

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPSILON: f64 = 1e-8;

/// Optimizer state aligned with the flat parameter view.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimizerState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
    pub base_lr: f64,
    pub min_lr: f64,
    pub weight_decay: f64,
    /// Learning rate used by the next step; trainers refresh it from the
    /// schedule once per epoch.
    pub lr: f64,
}

impl OptimizerState {
    pub fn new(param_count: usize, base_lr: f64, weight_decay: f64) -> Self {
        Self {
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
            step: 0,
            base_lr,
            min_lr: base_lr / 100.0,
            weight_decay,
            lr: base_lr,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Set the learning rate for subsequent steps from the cosine schedule.
    pub fn schedule_epoch(&mut self, epoch: usize, total_epochs: usize) -> Result<()> {
        self.lr = cosine_lr(epoch, total_epochs, self.base_lr, self.min_lr)?;
        Ok(())
    }
}

/// One Adam update (β1=0.9, β2=0.999, ε=1e-8) with decoupled weight decay.
/// `params` and `grads` must have identical shapes.
pub fn adam_step(state: &mut OptimizerState, params: &mut ParamSet, grads: &ParamSet) -> Result<()> {
    let g = grads.to_flat();
    if g.len() != state.m.len() {
        return Err(invalid_argument(format!(
            "optimizer tracks {} parameters, gradient has {}",
            state.m.len(),
            g.len()
        )));
    }
    if let Some(bad) = g.iter().find(|v| !v.is_finite()) {
        return Err(Error::Training(format!(
            "non-finite gradient entry {bad} at optimizer step {}",
            state.step + 1
        )));
    }
    let mut p = params.to_flat();
    state.step += 1;
    let t = state.step as i32;
    let bias1 = 1.0 - BETA1.powi(t);
    let bias2 = 1.0 - BETA2.powi(t);
    let lr = state.lr;
    let decay = 1.0 - lr * state.weight_decay;
    for i in 0..p.len() {
        let gi = g[i];
        state.m[i] = BETA1 * state.m[i] + (1.0 - BETA1) * gi;
        state.v[i] = BETA2 * state.v[i] + (1.0 - BETA2) * gi * gi;
        let m_hat = state.m[i] / bias1;
        let v_hat = state.v[i] / bias2;
        p[i] -= lr * m_hat / (v_hat.sqrt() + EPSILON);
        p[i] *= decay;
    }
    params.copy_from_flat(&p)
}

/// Cosine annealing: `min_lr + 0.5 (base_lr - min_lr) (1 + cos(pi step/total))`.
pub fn cosine_lr(step: usize, total_steps: usize, base_lr: f64, min_lr: f64) -> Result<f64> {
    if total_steps == 0 {
        return Err(invalid_argument("cosine schedule needs total_steps > 0"));
    }
    let frac = (step.min(total_steps) as f64) / (total_steps as f64);
    Ok(min_lr + 0.5 * (base_lr - min_lr) * (1.0 + (std::f64::consts::PI * frac).cos()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ndiff::{Activation, DenseLayer};

    fn one_param(value: f64) -> ParamSet {
        let mut layer = DenseLayer::zeros(1, 1, Activation::Identity);
        layer.weights.set(0, 0, value);
        layer.bias.clear();
        ParamSet::new(vec![layer])
    }

    #[test]
    fn zero_grad_zero_decay_is_noop() {
        let mut params = one_param(0.7);
        let grads = params.zeros_like();
        let mut state = OptimizerState::new(1, 0.001, 0.0);
        for _ in 0..5 {
            adam_step(&mut state, &mut params, &grads).unwrap();
        }
        assert_eq!(params.layers[0].weights.get(0, 0), 0.7);
    }

    #[test]
    fn constant_gradient_approaches_signed_unit_step() {
        // With a constant gradient the update tends to -lr * sign(g).
        let mut params = one_param(0.0);
        let mut grads = params.zeros_like();
        grads.layers[0].weights.set(0, 0, 3.5);
        let mut state = OptimizerState::new(1, 0.001, 0.0);
        let mut prev = 0.0;
        let mut last_delta = 0.0;
        for _ in 0..500 {
            adam_step(&mut state, &mut params, &grads).unwrap();
            let cur = params.layers[0].weights.get(0, 0);
            last_delta = cur - prev;
            prev = cur;
        }
        assert!(
            (last_delta + state.lr).abs() < 1e-6,
            "late update {last_delta} should approach -lr"
        );
    }

    #[test]
    fn decay_only_shrinks_geometrically() {
        let wd = 1e-5;
        let lr = 0.001;
        let mut params = one_param(1.0);
        let grads = params.zeros_like();
        let mut state = OptimizerState::new(1, lr, wd);
        let steps = 10;
        for _ in 0..steps {
            adam_step(&mut state, &mut params, &grads).unwrap();
        }
        let expect = (1.0 - lr * wd).powi(steps);
        assert!((params.layers[0].weights.get(0, 0) - expect).abs() < 1e-15);
    }

    #[test]
    fn adam_is_bit_deterministic() {
        let run = || {
            let mut params = one_param(0.25);
            let mut grads = params.zeros_like();
            let mut state = OptimizerState::new(1, 0.01, 1e-5);
            for i in 0..20 {
                grads.layers[0].weights.set(0, 0, (i as f64 * 0.37).sin());
                adam_step(&mut state, &mut params, &grads).unwrap();
            }
            params.layers[0].weights.get(0, 0)
        };
        assert_eq!(run().to_bits(), run().to_bits());
    }

    #[test]
    fn non_finite_gradient_is_an_error() {
        let mut params = one_param(0.0);
        let mut grads = params.zeros_like();
        grads.layers[0].weights.set(0, 0, f64::NAN);
        let mut state = OptimizerState::new(1, 0.001, 0.0);
        assert!(matches!(
            adam_step(&mut state, &mut params, &grads),
            Err(Error::Training(_))
        ));
    }

    #[test]
    fn cosine_endpoints_and_midpoint() {
        let base = 0.001;
        let min = base / 100.0;
        assert_eq!(cosine_lr(0, 100, base, min).unwrap(), base);
        assert!((cosine_lr(100, 100, base, min).unwrap() - min).abs() < 1e-18);
        let mid = cosine_lr(50, 100, base, min).unwrap();
        assert!((mid - 0.5 * (base + min)).abs() < 1e-15);
        assert!(cosine_lr(1, 0, base, min).is_err());
    }
}
