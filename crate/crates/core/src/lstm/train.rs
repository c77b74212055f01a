use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::network::{loss_and_gradients, NetworkParams, TrainingWindow};
use super::params::{Dims, NormStats, Weights};
use crate::error::{Error, Result};
use crate::features::{Feature, FeatureVector};
use crate::ingest::AlignedDemonstration;
use crate::rng::{self, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub inputs: Vec<Feature>,
    pub output: Feature,
    pub window: usize,
    pub hidden: usize,
    pub dense1: usize,
    pub dense2: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// Also train on windows that end before `window - 1`, left-padded with
    /// the first grid point, so early moments are in distribution.
    pub pad_early: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            inputs: Feature::SIX_INPUTS.to_vec(),
            output: Feature::DxEnd,
            window: 10,
            hidden: 32,
            dense1: 32,
            dense2: 16,
            epochs: 200,
            batch_size: 32,
            adam: AdamConfig::default(),
            pad_early: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn dims(&self) -> Dims {
        Dims {
            input: self.inputs.len(),
            hidden: self.hidden,
            dense1: self.dense1,
            dense2: self.dense2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("model: {m}")));
        if self.inputs.is_empty() {
            return bad("at least one input feature is required".into());
        }
        let mut sorted = self.inputs.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != self.inputs.len() {
            return bad("duplicate input feature".into());
        }
        if self.inputs.contains(&self.output) {
            return bad(format!("output `{}` is also an input", self.output));
        }
        if self.window == 0 || self.batch_size == 0 || self.hidden == 0 || self.dense1 == 0 || self.dense2 == 0 {
            return bad("window, batch size and layer widths must be positive".into());
        }
        if !(self.adam.lr > 0.0) {
            return bad("learning rate must be positive".into());
        }
        Ok(())
    }
}

/// Raw (un-normalized) input window ending at grid index `end`, left-padded
/// with the first grid point. Rows are `window` steps of `inputs` values.
pub fn raw_window(demo: &AlignedDemonstration, inputs: &[Feature], window: usize, end: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(window * inputs.len());
    for k in 0..window {
        let idx = (end + k + 1).saturating_sub(window);
        let fv: &FeatureVector = &demo.grid[idx];
        out.extend(inputs.iter().map(|f| fv.get(*f)));
    }
    out
}

impl NetworkParams {
    pub fn normalize_window(&self, raw: &[f64], steps: usize) -> TrainingWindow {
        let m = self.norm.input_mean.len();
        let inputs = raw
            .iter()
            .enumerate()
            .map(|(k, &v)| self.norm.normalize_input(k % m, v))
            .collect();
        TrainingWindow { inputs, steps, target: 0.0 }
    }

    /// Prediction in target units from a raw window.
    pub fn predict_raw(&self, raw: &[f64], steps: usize) -> Result<f64> {
        let w = self.normalize_window(raw, steps);
        Ok(self.norm.denormalize_target(self.predict(&w)?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub net: NetworkParams,
    pub config: TrainConfig,
    /// Mean training MSE (normalized units) of each epoch.
    pub loss_history: Vec<f64>,
}

impl TrainedModel {
    pub fn predict_at(&self, demo: &AlignedDemonstration, end: usize) -> Result<f64> {
        let raw = raw_window(demo, &self.config.inputs, self.config.window, end);
        self.net.predict_raw(&raw, self.config.window)
    }

    /// Predictions at every grid point of the demonstration.
    pub fn predict_series(&self, demo: &AlignedDemonstration) -> Result<Vec<f64>> {
        (0..demo.grid.len()).map(|e| self.predict_at(demo, e)).collect()
    }
}

pub fn fit_norm(demos: &[AlignedDemonstration], cfg: &TrainConfig) -> NormStats {
    let rows: Vec<Vec<f64>> = demos
        .iter()
        .flat_map(|d| d.grid.iter())
        .map(|fv| cfg.inputs.iter().map(|f| fv.get(*f)).collect())
        .collect();
    let targets: Vec<f64> = demos.iter().flat_map(|d| d.grid.iter()).map(|fv| fv.get(cfg.output)).collect();
    NormStats::fit(&rows, &targets)
}

pub fn build_windows(net: &NetworkParams, demos: &[AlignedDemonstration], cfg: &TrainConfig) -> Vec<TrainingWindow> {
    let mut out = Vec::new();
    for d in demos {
        let first_end = if cfg.pad_early { 0 } else { cfg.window - 1 };
        for end in first_end..d.grid.len() {
            let raw = raw_window(d, &cfg.inputs, cfg.window, end);
            let mut w = net.normalize_window(&raw, cfg.window);
            w.target = net.norm.normalize_target(d.grid[end].get(cfg.output));
            out.push(w);
        }
    }
    out
}

pub fn init_network(demos: &[AlignedDemonstration], cfg: &TrainConfig) -> Result<NetworkParams> {
    let weights = Weights::init(cfg.dims(), &mut rng::substream(cfg.seed, Stream::Init));
    NetworkParams::new(weights, fit_norm(demos, cfg))
}

/// Mini-batch Adam on the MSE loss, reshuffling windows every epoch.
pub fn train(demos: &[AlignedDemonstration], cfg: &TrainConfig) -> Result<TrainedModel> {
    cfg.validate()?;
    if demos.is_empty() {
        return Err(Error::Rejected("no training demonstrations".into()));
    }
    let mut net = init_network(demos, cfg)?;
    let windows = build_windows(&net, demos, cfg);
    if windows.is_empty() {
        return Err(Error::Rejected(format!(
            "no training windows: every demonstration is shorter than the window of {}",
            cfg.window
        )));
    }
    let mut adam = AdamState::new(cfg.dims(), cfg.adam);
    let mut shuffle = rng::substream(cfg.seed, Stream::Shuffle);
    let mut order: Vec<usize> = (0..windows.len()).collect();
    let mut loss_history = Vec::with_capacity(cfg.epochs);
    let mut batch = Vec::with_capacity(cfg.batch_size);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle);
        let mut sse = 0.0;
        for idx in order.chunks(cfg.batch_size) {
            batch.clear();
            batch.extend(idx.iter().map(|&k| windows[k].clone()));
            let (mse, grads) = loss_and_gradients(&net, &batch)?;
            sse += mse * batch.len() as f64;
            adam_step(&mut adam, &mut net.weights, &grads);
        }
        if !net.weights.is_finite() {
            return Err(Error::Numeric {
                step: epoch,
                what: "non-finite weights after epoch".into(),
            });
        }
        loss_history.push(sse / windows.len() as f64);
    }
    Ok(TrainedModel {
        net,
        config: cfg.clone(),
        loss_history,
    })
}

/// Mean MSE (normalized units) of the model over every window of `demos`.
pub fn evaluate_mse(model: &TrainedModel, demos: &[AlignedDemonstration]) -> Result<f64> {
    let windows = build_windows(&model.net, demos, &model.config);
    let mut sse = 0.0;
    for w in &windows {
        let e = model.net.predict(w)? - w.target;
        sse += e * e;
    }
    Ok(sse / windows.len().max(1) as f64)
}
