//! Synthetic merge demonstrations with a known saliency schedule.
//!
//! The target `dx_end` is an exact linear function of the six inputs,
//!
//! ```text
//! dx_end = b + sum_i c_i * x_i
//! x_i    = m_i(alpha) + kappa * w_i(alpha) / c_i * z_i(t)
//! ```
//!
//! so the target's deviation from its mean path is `kappa * sum_i w_i(alpha) z_i(t)`,
//! the schedule-weighted combination of unit-variance latent drivers `z_i`.
//! Each `z_i` is a stationary AR(1) process whose per-frame autocorrelation
//! eases out from `persistence.0` at the start of the window to `persistence.1`
//! at the crossing, `p0 + (p1 - p0)(1 - (1 - alpha)^2)`. Under the generator itself the Shapley value of input `i`
//! against the mean background is `c_i (x_i - mean x_i) = kappa w_i (z_i - mean z_i)`.

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;
use crate::features::{Feature, FeatureVector};
use crate::ingest::{Frame, MergeDemonstration};
use crate::rng::{self, Stream};

pub const INPUTS: [Feature; 6] = Feature::SIX_INPUTS;
pub const TARGET: Feature = Feature::DxEnd;

/// Generator coefficients `c_i`, in [`INPUTS`] order.
pub const COEFFICIENTS: [f64; 6] = [0.5, 2.0, 2.0, -5.0, -0.5, 1.0];

/// Mean path `m_i(alpha)` as `(value at 0, value at 1)`, linear in between.
pub const MEAN_PATHS: [(f64, f64); 6] = [
    (25.0, 15.0),  // dx_lead
    (0.5, 0.5),    // dv_lead
    (12.0, 8.0),   // vx_ego
    (0.2, 1.0),    // vy_ego
    (-20.0, -12.0), // dx_lag
    (1.0, 0.0),    // dv_lag
];

/// Linear pieces approximating the converging schedule.
const CONVERGING_KNOTS: usize = 20;

/// Mean of `dx_end` at the crossing.
pub const TARGET_END: f64 = 25.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleKnot {
    pub alpha: f64,
    pub weights: Vec<f64>,
}

/// Piecewise-linear weight schedule over decision progress in [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaliencySchedule {
    pub knots: Vec<ScheduleKnot>,
}

impl SaliencySchedule {
    pub fn constant(weights: Vec<f64>) -> Self {
        SaliencySchedule {
            knots: vec![
                ScheduleKnot { alpha: 0.0, weights: weights.clone() },
                ScheduleKnot { alpha: 1.0, weights },
            ],
        }
    }

    pub fn linear(start: Vec<f64>, end: Vec<f64>) -> Self {
        SaliencySchedule {
            knots: vec![
                ScheduleKnot { alpha: 0.0, weights: start },
                ScheduleKnot { alpha: 1.0, weights: end },
            ],
        }
    }

    /// Uniform at the start, concentrated on `dv_lead`, `vx_ego` and `vy_ego`
    /// at the crossing. The weights ease out, `w_end + (w_0 - w_end)(1 - alpha)^2`,
    /// so the mix changes quickly early on and settles before the crossing.
    pub fn converging() -> Self {
        let start = [1.0 / 6.0; 6];
        let end = [0.05, 0.25, 0.35, 0.25, 0.05, 0.05];
        let knots = (0..=CONVERGING_KNOTS)
            .map(|k| {
                let alpha = k as f64 / CONVERGING_KNOTS as f64;
                let r = (1.0 - alpha).powi(2);
                let mut weights: Vec<f64> = start.iter().zip(end).map(|(s, e)| e + (s - e) * r).collect();
                let sum: f64 = weights.iter().sum();
                weights.iter_mut().for_each(|w| *w /= sum);
                ScheduleKnot { alpha, weights }
            })
            .collect();
        SaliencySchedule { knots }
    }

    pub fn validate(&self, m: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(format!("saliency schedule: {msg}")));
        if self.knots.len() < 2 {
            return bad("needs at least two knots".into());
        }
        if self.knots[0].alpha != 0.0 || self.knots[self.knots.len() - 1].alpha != 1.0 {
            return bad("knots must start at alpha 0 and end at alpha 1".into());
        }
        if self.knots.windows(2).any(|w| w[1].alpha <= w[0].alpha) {
            return bad("knot alphas must increase".into());
        }
        for k in &self.knots {
            if k.weights.len() != m {
                return bad(format!("knot at {} has {} weights, expected {m}", k.alpha, k.weights.len()));
            }
            if k.weights.iter().any(|&w| !(w >= 0.0 && w.is_finite())) {
                return bad(format!("negative or non-finite weight at {}", k.alpha));
            }
            let sum: f64 = k.weights.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return bad(format!("weights at {} sum to {sum}", k.alpha));
            }
        }
        Ok(())
    }

    /// `w(alpha)` for alpha in [0, 1].
    pub fn weights(&self, alpha: f64) -> Vec<f64> {
        let a = alpha.clamp(0.0, 1.0);
        let j = self
            .knots
            .windows(2)
            .position(|w| a <= w[1].alpha)
            .unwrap_or(self.knots.len() - 2);
        let (k0, k1) = (&self.knots[j], &self.knots[j + 1]);
        let t = (a - k0.alpha) / (k1.alpha - k0.alpha);
        k0.weights
            .iter()
            .zip(&k1.weights)
            .map(|(w0, w1)| w0 + t * (w1 - w0))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_demos: usize,
    /// Decision window duration bounds in seconds.
    pub duration_range: (f64, f64),
    pub frame_rate_hz: f64,
    pub saliency_schedule: SaliencySchedule,
    /// Per-frame autocorrelation of the latent drivers at alpha 0 and 1.
    pub persistence: (f64, f64),
    /// Target deviation scale in meters.
    pub amplitude: f64,
    /// Observation noise std per input feature.
    pub noise_std: Vec<f64>,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_demos: 100,
            duration_range: (3.0, 6.0),
            frame_rate_hz: 10.0,
            saliency_schedule: SaliencySchedule::converging(),
            persistence: (0.0, 1.0),
            amplitude: 8.0,
            noise_std: vec![0.0; 6],
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        self.saliency_schedule.validate(INPUTS.len())?;
        let cfg = |m: &str| Err(Error::Config(format!("synth: {m}")));
        if self.n_demos < 2 {
            return cfg("n_demos must be at least 2");
        }
        let (lo, hi) = self.duration_range;
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return cfg("duration_range must satisfy 0 < min <= max");
        }
        if !(self.frame_rate_hz > 0.0) || (1000.0 / self.frame_rate_hz).fract() != 0.0 {
            return cfg("frame_rate_hz must divide 1000 ms evenly");
        }
        if lo * self.frame_rate_hz < 1.0 {
            return cfg("minimum duration must span at least two frames");
        }
        let (p0, p1) = self.persistence;
        if !((0.0..=1.0).contains(&p0) && (0.0..=1.0).contains(&p1)) {
            return cfg("persistence values must lie in [0, 1]");
        }
        if self.noise_std.len() != INPUTS.len() || self.noise_std.iter().any(|&s| !(s >= 0.0)) {
            return cfg("noise_std needs one non-negative entry per input feature");
        }
        if !(self.amplitude >= 0.0 && self.amplitude.is_finite()) {
            return cfg("amplitude must be non-negative");
        }
        Ok(())
    }
}

/// The exact linear generator, usable as a reference predictor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearGenerator {
    pub inputs: Vec<Feature>,
    pub target: Feature,
    pub coefficients: Vec<f64>,
    pub intercept: f64,
}

impl LinearGenerator {
    pub fn standard() -> Self {
        let end: f64 = COEFFICIENTS
            .iter()
            .zip(MEAN_PATHS)
            .map(|(c, (_, m1))| c * m1)
            .sum();
        LinearGenerator {
            inputs: INPUTS.to_vec(),
            target: TARGET,
            coefficients: COEFFICIENTS.to_vec(),
            intercept: TARGET_END - end,
        }
    }

    pub fn predict(&self, fv: &FeatureVector) -> f64 {
        self.intercept
            + self
                .inputs
                .iter()
                .zip(&self.coefficients)
                .map(|(f, c)| c * fv.get(*f))
                .sum::<f64>()
    }
}

/// Contents of `truth.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthTruth {
    pub config: SynthConfig,
    pub generator: LinearGenerator,
    pub mean_paths: Vec<(f64, f64)>,
}

impl SynthTruth {
    pub fn new(config: &SynthConfig) -> Self {
        SynthTruth {
            config: config.clone(),
            generator: LinearGenerator::standard(),
            mean_paths: MEAN_PATHS.to_vec(),
        }
    }

    /// Std of each input's ground-truth Shapley value at `alpha` (in [0, 1]),
    /// `kappa * w_i(alpha)`.
    pub fn saliency_scale(&self, alpha: f64) -> Vec<f64> {
        self.config
            .saliency_schedule
            .weights(alpha)
            .into_iter()
            .map(|w| self.config.amplitude * w)
            .collect()
    }
}

pub fn generate_synthetic_dataset(config: &SynthConfig) -> Result<Vec<MergeDemonstration>> {
    config.validate()?;
    let base = rng::substream_seed(config.seed, Stream::Synth);
    let ids: Vec<u64> = (0..config.n_demos as u64).collect();
    Ok(exec::map(&ids, |&id| generate_demo(config, id, base ^ id)))
}

fn generate_demo(cfg: &SynthConfig, demo_id: u64, seed: u64) -> MergeDemonstration {
    let mut rng = rng::from_seed(seed);
    let (lo, hi) = cfg.duration_range;
    let duration = if hi > lo { rng.random_range(lo..=hi) } else { lo };
    let n = ((duration * cfg.frame_rate_hz).round() as usize + 1).max(2);
    let dt_ms = (1000.0 / cfg.frame_rate_hz) as i64;
    let generator = LinearGenerator::standard();
    let lateral_start: f64 = rng.random_range(1.0..2.0);

    let mut z: Vec<f64> = (0..INPUTS.len()).map(|_| rng.sample(StandardNormal)).collect();
    let frames = (0..n)
        .map(|t| {
            let alpha = t as f64 / (n - 1) as f64;
            if t > 0 {
                let ease = 1.0 - (1.0 - alpha).powi(2);
                let rho = cfg.persistence.0 + (cfg.persistence.1 - cfg.persistence.0) * ease;
                let innov = (1.0 - rho * rho).max(0.0).sqrt();
                for zi in z.iter_mut() {
                    let e: f64 = rng.sample(StandardNormal);
                    *zi = rho * *zi + innov * e;
                }
            }
            let w = cfg.saliency_schedule.weights(alpha);
            let mut fv = FeatureVector::default();
            for (i, f) in INPUTS.iter().enumerate() {
                let (m0, m1) = MEAN_PATHS[i];
                let mean = m0 + (m1 - m0) * alpha;
                fv.set(*f, mean + cfg.amplitude * w[i] / COEFFICIENTS[i] * z[i]);
            }
            fv.set(TARGET, generator.predict(&fv));
            for (i, f) in INPUTS.iter().enumerate() {
                if cfg.noise_std[i] > 0.0 {
                    let e: f64 = rng.sample(StandardNormal);
                    fv.set(*f, fv.get(*f) + cfg.noise_std[i] * e);
                }
            }
            // Reaches the boundary exactly at the final frame.
            fv.set(Feature::DyBdry, lateral_start * (1.0 - alpha));
            Frame {
                timestamp: t as i64 * dt_ms,
                features: fv,
            }
        })
        .collect();
    MergeDemonstration {
        demo_id,
        ego_track_id: demo_id,
        frames,
        crossing_index: n - 1,
    }
}
