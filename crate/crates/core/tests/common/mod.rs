//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use itertools::Itertools;
use merge_saliency::lstm::{loss_and_gradients, Dims, NetworkParams, NormStats, TrainingWindow, Weights};
use merge_saliency::rng;
use merge_saliency::shap::Predictor;
use merge_saliency::Result;
use rand::Rng;

/// Shapley values as the average marginal contribution over every
/// ordering of the players. `v` is indexed by coalition bits.
pub fn permutation_shapley(v: &[f64], m: usize) -> Vec<f64> {
    let mut phi = vec![0.0; m];
    let mut count = 0usize;
    for order in (0..m).permutations(m) {
        let mut s = 0usize;
        for i in order {
            phi[i] += v[s | 1 << i] - v[s];
            s |= 1 << i;
        }
        count += 1;
    }
    phi.iter().map(|p| p / count as f64).collect()
}

/// A random game on `m` players with value table of length `2^m`.
pub fn random_game<R: Rng>(rng: &mut R, m: usize) -> Vec<f64> {
    (0..1usize << m).map(|_| rng.random_range(-10.0..10.0)).collect()
}

/// `f(window) = bias + sum_{t,i} w[t][i] * x[t][i]`.
pub struct LinearWindowModel {
    pub m: usize,
    pub steps: usize,
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl Predictor for LinearWindowModel {
    fn n_inputs(&self) -> usize {
        self.m
    }

    fn steps(&self) -> usize {
        self.steps
    }

    fn predict_window(&self, raw: &[f64]) -> Result<f64> {
        Ok(self.bias + raw.iter().zip(&self.weights).map(|(x, w)| x * w).sum::<f64>())
    }
}

fn random_batch(seed: u64, n: usize, steps: usize, m: usize) -> Vec<TrainingWindow> {
    let mut r = rng::from_seed(seed);
    (0..n)
        .map(|_| TrainingWindow {
            inputs: (0..steps * m).map(|_| r.random_range(-1.0..1.0)).collect(),
            steps,
            target: r.random_range(-1.0..1.0),
        })
        .collect()
}

/// Max relative error of BPTT gradients against central differences on a
/// random network with two inputs, two hidden units and five steps.
pub fn max_rel_error(seed: u64) -> f64 {
    let d = Dims { input: 2, hidden: 2, dense1: 2, dense2: 2 };
    let net = NetworkParams::new(Weights::init(d, &mut rng::from_seed(seed)), NormStats::identity(2)).unwrap();
    let batch = random_batch(seed + 100, 3, 5, 2);
    let (_, grads) = loss_and_gradients(&net, &batch).unwrap();
    let theta = net.weights.flatten();
    let analytic = grads.flatten();
    let h = 1e-5;
    let loss_at = |flat: &[f64]| {
        let mut n2 = net.clone();
        n2.weights.set_flat(flat);
        loss_and_gradients(&n2, &batch).unwrap().0
    };
    let mut worst = 0.0f64;
    for k in 0..theta.len() {
        let mut plus = theta.clone();
        plus[k] += h;
        let mut minus = theta.clone();
        minus[k] -= h;
        let fd = (loss_at(&plus) - loss_at(&minus)) / (2.0 * h);
        let denom = fd.abs().max(analytic[k].abs()).max(1e-6);
        worst = worst.max((fd - analytic[k]).abs() / denom);
    }
    worst
}
