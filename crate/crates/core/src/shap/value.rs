use rand::seq::index::sample;

use super::CoalitionMask;
use crate::error::{Error, Result};
use crate::exec;
use crate::ingest::AlignedDemonstration;
use crate::lstm::train::{raw_window, train, TrainConfig, TrainedModel};
use crate::rng::{self, Stream};

/// Reference windows standing in for absent features, each a raw
/// `window x inputs` row-major block.
#[derive(Debug, Clone, PartialEq)]
pub struct BackgroundSet {
    pub windows: Vec<Vec<f64>>,
}

impl BackgroundSet {
    /// Element-wise mean of the training windows ending at grid index `end`.
    pub fn mean_at(train: &[AlignedDemonstration], cfg: &TrainConfig, end: usize) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::Rejected("background needs at least one training demonstration".into()));
        }
        let n = cfg.window * cfg.inputs.len();
        let mut sum = vec![0.0; n];
        for d in train {
            for (s, v) in sum.iter_mut().zip(raw_window(d, &cfg.inputs, cfg.window, end)) {
                *s += v;
            }
        }
        let k = train.len() as f64;
        Ok(BackgroundSet {
            windows: vec![sum.into_iter().map(|s| s / k).collect()],
        })
    }

    /// `k` training windows ending at `end`, drawn without replacement.
    pub fn sample_at(train: &[AlignedDemonstration], cfg: &TrainConfig, end: usize, k: usize, seed: u64) -> Result<Self> {
        if k == 0 || k > train.len() {
            return Err(Error::Config(format!(
                "background size {k} must be between 1 and the {} training demonstrations",
                train.len()
            )));
        }
        let mut r = rng::substream(seed ^ end as u64, Stream::Background);
        let mut idx = sample(&mut r, train.len(), k).into_vec();
        idx.sort_unstable();
        Ok(BackgroundSet {
            windows: idx.into_iter().map(|i| raw_window(&train[i], &cfg.inputs, cfg.window, end)).collect(),
        })
    }
}

/// A model that maps a raw `steps x inputs` window to one prediction.
pub trait Predictor: Sync {
    fn n_inputs(&self) -> usize;
    fn steps(&self) -> usize;
    fn predict_window(&self, raw: &[f64]) -> Result<f64>;
}

impl Predictor for TrainedModel {
    fn n_inputs(&self) -> usize {
        self.config.inputs.len()
    }

    fn steps(&self) -> usize {
        self.config.window
    }

    fn predict_window(&self, raw: &[f64]) -> Result<f64> {
        self.net.predict_raw(raw, self.config.window)
    }
}

/// Mean model output with absent features replaced, over the whole window,
/// by each background reference.
pub fn value_mask<P: Predictor + ?Sized>(
    model: &P,
    window: &[f64],
    mask: CoalitionMask,
    background: &BackgroundSet,
) -> Result<f64> {
    let m = model.n_inputs();
    if mask.m != m || window.len() != model.steps() * m || background.windows.iter().any(|b| b.len() != window.len()) {
        return Err(Error::Contract("mask, window and background shapes disagree".into()));
    }
    if background.windows.is_empty() {
        return Err(Error::Contract("empty background set".into()));
    }
    if mask.is_full() {
        return model.predict_window(window);
    }
    let mut composite = vec![0.0; window.len()];
    let mut total = 0.0;
    for bg in &background.windows {
        for (k, c) in composite.iter_mut().enumerate() {
            *c = if mask.contains(k % m) { window[k] } else { bg[k] };
        }
        total += model.predict_window(&composite)?;
    }
    Ok(total / background.windows.len() as f64)
}

/// One model per non-empty feature subset, indexed by mask bits; the empty
/// coalition is the training target mean.
#[derive(Debug, Clone)]
pub struct SubsetModels {
    pub m: usize,
    pub models: Vec<Option<TrainedModel>>,
    pub target_mean: f64,
}

/// Training seed for a feature subset. The full subset keeps the base seed
/// so it reproduces the main model.
pub fn subset_seed(base: u64, mask: CoalitionMask) -> u64 {
    if mask.is_full() {
        base
    } else {
        base ^ (mask.bits as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
    }
}

/// Trains the `2^m - 1` subset models once.
pub fn retrain_subset_models(train_demos: &[AlignedDemonstration], cfg: &TrainConfig) -> Result<SubsetModels> {
    let m = cfg.inputs.len();
    if m > super::MAX_FEATURES {
        return Err(Error::Rejected(format!("{m} features exceed the enumeration limit")));
    }
    let models = exec::try_map_range(1usize << m, |bits| -> Result<Option<TrainedModel>> {
        let mask = CoalitionMask { bits: bits as u32, m };
        if mask.is_empty() {
            return Ok(None);
        }
        let sub = TrainConfig {
            inputs: mask.members().map(|i| cfg.inputs[i]).collect(),
            seed: subset_seed(cfg.seed, mask),
            ..cfg.clone()
        };
        train(train_demos, &sub).map(Some)
    })?;
    let targets: Vec<f64> = train_demos.iter().flat_map(|d| d.grid.iter().map(|fv| fv.get(cfg.output))).collect();
    let target_mean = targets.iter().sum::<f64>() / targets.len() as f64;
    Ok(SubsetModels { m, models, target_mean })
}

/// Prediction of the model trained on the present features only.
pub fn value_retrain(models: &SubsetModels, demo: &AlignedDemonstration, end: usize, mask: CoalitionMask) -> Result<f64> {
    if mask.m != models.m {
        return Err(Error::Contract("mask size differs from the subset model family".into()));
    }
    match &models.models[mask.bits as usize] {
        None => Ok(models.target_mean),
        Some(model) => model.predict_at(demo, end),
    }
}
