use serde::{Deserialize, Serialize};

use super::params::{Dims, Weights};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 0.005,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Weights,
    pub v: Weights,
    pub step_count: u64,
    pub config: AdamConfig,
}

impl AdamState {
    pub fn new(dims: Dims, config: AdamConfig) -> Self {
        AdamState {
            m: Weights::zeros(dims),
            v: Weights::zeros(dims),
            step_count: 0,
            config,
        }
    }
}

/// Bias-corrected Adam update of every parameter block.
pub fn adam_step(state: &mut AdamState, params: &mut Weights, grads: &Weights) {
    state.step_count += 1;
    let AdamConfig { lr, beta1, beta2, eps } = state.config;
    let t = state.step_count as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    let blocks = params
        .slices_mut()
        .into_iter()
        .zip(state.m.slices_mut())
        .zip(state.v.slices_mut())
        .zip(grads.slices());
    for (((p, m), v), g) in blocks {
        for k in 0..p.len() {
            m[k] = beta1 * m[k] + (1.0 - beta1) * g[k];
            v[k] = beta2 * v[k] + (1.0 - beta2) * g[k] * g[k];
            let m_hat = m[k] / c1;
            let v_hat = v[k] / c2;
            p[k] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}

/// Adam on a plain parameter vector; shares the update rule with
/// [`adam_step`] for scalar experiments.
pub fn adam_step_flat(m: &mut [f64], v: &mut [f64], step: &mut u64, cfg: AdamConfig, p: &mut [f64], g: &[f64]) {
    *step += 1;
    let t = *step as i32;
    let (c1, c2) = (1.0 - cfg.beta1.powi(t), 1.0 - cfg.beta2.powi(t));
    for k in 0..p.len() {
        m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g[k];
        v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g[k] * g[k];
        p[k] -= cfg.lr * (m[k] / c1) / ((v[k] / c2).sqrt() + cfg.eps);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn dims() -> Dims {
        Dims { input: 2, hidden: 3, dense1: 2, dense2: 2 }
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut w = Weights::init(dims(), &mut rng::from_seed(1));
        let before = w.clone();
        let mut st = AdamState::new(dims(), AdamConfig::default());
        adam_step(&mut st, &mut w, &Weights::zeros(dims()));
        assert_eq!(w, before);
        assert_eq!(st.step_count, 1);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let mut w = Weights::init(dims(), &mut rng::from_seed(2));
        let before = w.flatten();
        let mut g = Weights::zeros(dims());
        let gflat: Vec<f64> = (0..before.len()).map(|k| if k % 2 == 0 { 0.3 } else { -2.0 }).collect();
        g.set_flat(&gflat);
        let mut st = AdamState::new(dims(), AdamConfig::default());
        adam_step(&mut st, &mut w, &g);
        for ((a, b), gk) in w.flatten().iter().zip(&before).zip(&gflat) {
            let expected = -0.005 * gk.signum();
            assert!(((a - b) - expected).abs() < 1e-9);
        }
        assert!(st.v.flatten().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn quadratic_descent() {
        // f(x) = x^2 from x = 1: Adam moves about lr per step while the
        // gradient keeps its sign, so 100 steps end near 0.5.
        let (mut m, mut v, mut step) = ([0.0], [0.0], 0u64);
        let mut x = [1.0];
        let mut prev = 1.0f64;
        for k in 0..100 {
            let g = [2.0 * x[0]];
            adam_step_flat(&mut m, &mut v, &mut step, AdamConfig::default(), &mut x, &g);
            if k >= 5 {
                assert!(x[0].abs() < prev);
            }
            prev = x[0].abs();
        }
        assert!(x[0].abs() < 0.7);
    }
}
