//! Pipeline configuration files.
//!
//! Both the pipeline config and the scene file are TOML. Every random draw
//! derives from the top-level `seed`; stage sections never carry their own.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point, Rect, SceneGeometry, Side};
use crate::ingest::{ExtractConfig, Sentinels};
use crate::lstm::adam::AdamConfig;
use crate::lstm::train::TrainConfig;
use crate::features::Feature;
use crate::shap::{ExplainConfig, Variant, MAX_FEATURES};
use crate::synth::{SaliencySchedule, SynthConfig};
use crate::uncertainty::UncertaintyConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    #[default]
    Synth,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub source: Source,
    /// Trajectory CSV, relative to the config file.
    pub tracks: Option<PathBuf>,
    /// Scene file, relative to the config file.
    pub scene: Option<PathBuf>,
    pub grid_resolution: usize,
    pub split_ratio: f64,
    pub min_frames: usize,
    pub frame_interval_ms: i64,
    pub frame_tolerance_ms: i64,
    pub highway_lane_width: Option<f64>,
}

impl Default for DataSection {
    fn default() -> Self {
        let e = ExtractConfig::default();
        DataSection {
            source: Source::Synth,
            tracks: None,
            scene: None,
            grid_resolution: 101,
            split_ratio: 0.8,
            min_frames: e.min_frames,
            frame_interval_ms: e.frame_interval_ms,
            frame_tolerance_ms: e.frame_tolerance_ms,
            highway_lane_width: e.highway_lane_width,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub n_demos: usize,
    pub duration_range: (f64, f64),
    pub frame_rate_hz: f64,
    /// `converging`, `uniform`, or an explicit schedule via `knots`.
    pub schedule: String,
    pub knots: Option<SaliencySchedule>,
    pub persistence: (f64, f64),
    pub amplitude: f64,
    pub noise_std: Vec<f64>,
}

impl Default for SynthSection {
    fn default() -> Self {
        let s = SynthConfig::default();
        SynthSection {
            n_demos: s.n_demos,
            duration_range: s.duration_range,
            frame_rate_hz: s.frame_rate_hz,
            schedule: "converging".into(),
            knots: None,
            persistence: s.persistence,
            amplitude: s.amplitude,
            noise_std: s.noise_std,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub inputs: Vec<String>,
    pub output: String,
    pub window: usize,
    pub hidden: usize,
    pub dense1: usize,
    pub dense2: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub pad_early: bool,
}

impl Default for ModelSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        ModelSection {
            inputs: t.inputs.iter().map(|f| f.name().to_string()).collect(),
            output: t.output.name().to_string(),
            window: t.window,
            hidden: t.hidden,
            dense1: t.dense1,
            dense2: t.dense2,
            epochs: t.epochs,
            batch_size: t.batch_size,
            learning_rate: t.adam.lr,
            beta1: t.adam.beta1,
            beta2: t.adam.beta2,
            adam_eps: t.adam.eps,
            pad_early: t.pad_early,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShapSection {
    pub variant: Variant,
    pub background_k: usize,
    /// Also compute the retrain variant as a cross-check of the masking one.
    pub retrain_check: bool,
    /// Epochs per subset model when retraining.
    pub retrain_epochs: usize,
}

impl Default for ShapSection {
    fn default() -> Self {
        ShapSection { variant: Variant::Mask, background_k: 1, retrain_check: false, retrain_epochs: 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub synth: SynthSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub shap: ShapSection,
    #[serde(default)]
    pub uncertainty: UncertaintyConfig,
}

fn parse_feature(name: &str) -> Result<Feature> {
    name.parse()
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a config file; relative data paths are resolved against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::Config(format!("config file {} not found", path.display())),
            _ => Error::io(path, e),
        })?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.data.tracks, &mut cfg.data.scene].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Checks everything that can be checked without reading data.
    pub fn validate(&self) -> Result<()> {
        let train = self.train_config()?;
        train.validate()?;
        if train.inputs.len() > MAX_FEATURES {
            return Err(Error::Config(format!("at most {MAX_FEATURES} input features are supported")));
        }
        if self.data.grid_resolution < 2 {
            return Err(Error::Config("grid_resolution must be at least 2".into()));
        }
        if !(self.data.split_ratio > 0.0 && self.data.split_ratio < 1.0) {
            return Err(Error::Config(format!("split_ratio must lie in (0, 1), got {}", self.data.split_ratio)));
        }
        match self.data.source {
            Source::Synth => {
                let s = self.synth_config()?;
                s.validate()?;
                if train.inputs.iter().any(|f| !crate::synth::INPUTS.contains(f)) || train.output != crate::synth::TARGET {
                    return Err(Error::Config("synthetic data only supports the six standard inputs and dx_end".into()));
                }
            }
            Source::Csv => {
                if self.data.tracks.is_none() || self.data.scene.is_none() {
                    return Err(Error::Config("csv source needs data.tracks and data.scene".into()));
                }
            }
        }
        if self.shap.background_k == 0 {
            return Err(Error::Config("shap.background_k must be at least 1".into()));
        }
        self.uncertainty.validate()
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let m = &self.model;
        Ok(TrainConfig {
            inputs: m.inputs.iter().map(|n| parse_feature(n)).collect::<Result<_>>()?,
            output: parse_feature(&m.output)?,
            window: m.window,
            hidden: m.hidden,
            dense1: m.dense1,
            dense2: m.dense2,
            epochs: m.epochs,
            batch_size: m.batch_size,
            adam: AdamConfig { lr: m.learning_rate, beta1: m.beta1, beta2: m.beta2, eps: m.adam_eps },
            pad_early: m.pad_early,
            seed: self.seed,
        })
    }

    pub fn synth_config(&self) -> Result<SynthConfig> {
        let s = &self.synth;
        let saliency_schedule = match (s.schedule.as_str(), &s.knots) {
            (_, Some(k)) => k.clone(),
            ("converging", None) => SaliencySchedule::converging(),
            ("uniform", None) => SaliencySchedule::constant(vec![1.0 / 6.0; 6]),
            (other, None) => return Err(Error::Config(format!("unknown synth schedule `{other}`"))),
        };
        Ok(SynthConfig {
            n_demos: s.n_demos,
            duration_range: s.duration_range,
            frame_rate_hz: s.frame_rate_hz,
            saliency_schedule,
            persistence: s.persistence,
            amplitude: s.amplitude,
            noise_std: s.noise_std.clone(),
            seed: self.seed,
        })
    }

    pub fn explain_config(&self) -> ExplainConfig {
        ExplainConfig { background_k: self.shap.background_k, seed: self.seed }
    }

    pub fn extract_config(&self, scene: &SceneFile) -> ExtractConfig {
        ExtractConfig {
            sentinels: scene.sentinels,
            min_frames: self.data.min_frames,
            frame_interval_ms: self.data.frame_interval_ms,
            frame_tolerance_ms: self.data.frame_tolerance_ms,
            highway_lane_width: self.data.highway_lane_width,
        }
    }

    /// Folds the scene file's optional grid, split and seed settings in.
    /// A value set differently in both files is a configuration error.
    pub fn merge_scene(&mut self, scene: &SceneFile) -> Result<()> {
        fn merge<T: PartialEq + std::fmt::Debug + Copy>(name: &str, ours: &mut T, default: T, theirs: Option<T>) -> Result<()> {
            if let Some(v) = theirs {
                if *ours != default && *ours != v {
                    return Err(Error::Config(format!("{name} differs between config ({ours:?}) and scene file ({v:?})")));
                }
                *ours = v;
            }
            Ok(())
        }
        let d = DataSection::default();
        merge("grid_resolution", &mut self.data.grid_resolution, d.grid_resolution, scene.grid_resolution)?;
        merge("split_ratio", &mut self.data.split_ratio, d.split_ratio, scene.split_ratio)?;
        if let Some(s) = scene.seed {
            if s != self.seed {
                return Err(Error::Config(format!("seed differs between config ({}) and scene file ({s})", self.seed)));
            }
        }
        self.validate()
    }
}

/// Scene description for recorded data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneFile {
    pub lane_boundary: Vec<Point>,
    pub ramp_end: Point,
    #[serde(alias = "region_of_interest")]
    pub roi: Rect,
    #[serde(default)]
    pub ramp_side: Side,
    #[serde(default)]
    pub sentinels: Sentinels,
    pub grid_resolution: Option<usize>,
    pub split_ratio: Option<f64>,
    pub seed: Option<u64>,
}

impl SceneFile {
    pub fn from_toml(text: &str) -> Result<Self> {
        let s: SceneFile = toml::from_str(text).map_err(|e| Error::Config(format!("scene file: {e}")))?;
        s.geometry().validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn geometry(&self) -> SceneGeometry {
        SceneGeometry {
            lane_boundary: self.lane_boundary.clone(),
            ramp_end: self.ramp_end,
            region_of_interest: self.roi,
            ramp_side: self.ramp_side,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_uses_defaults() {
        let cfg = PipelineConfig::from_toml("seed = 3").unwrap();
        assert_eq!(cfg.data.grid_resolution, 101);
        assert_eq!(cfg.train_config().unwrap().seed, 3);
        assert_eq!(cfg.uncertainty.kl_bins, 20);
        assert_eq!(PipelineConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn seed_is_required() {
        assert!(matches!(PipelineConfig::from_toml(""), Err(Error::Config(_))));
    }

    #[test]
    fn unknown_feature_is_a_config_error() {
        let err = PipelineConfig::from_toml("seed = 1\n[model]\ninputs = [\"dx_lead\", \"speed\"]").unwrap_err();
        assert!(matches!(err, Error::Config(ref m) if m.contains("speed")), "{err}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn unknown_key_is_rejected() {
        assert!(PipelineConfig::from_toml("seed = 1\n[model]\nepoch = 3").is_err());
    }

    #[test]
    fn csv_source_needs_paths() {
        assert!(PipelineConfig::from_toml("seed = 1\n[data]\nsource = \"csv\"").is_err());
    }

    #[test]
    fn scene_file_round_trip_and_merge() {
        let text = r#"
            lane_boundary = [[0.0, 0.0], [100.0, 0.0]]
            ramp_end = [90.0, -2.0]
            roi = { min = [-10.0, -10.0], max = [110.0, 10.0] }
            sentinels = { dx_lead = 150.0, dx_lag = -150.0, dv = 0.0 }
            grid_resolution = 51
        "#;
        let scene = SceneFile::from_toml(text).unwrap();
        assert_eq!(scene.sentinels.dx_lag, -150.0);
        let mut cfg = PipelineConfig::from_toml("seed = 1").unwrap();
        cfg.merge_scene(&scene).unwrap();
        assert_eq!(cfg.data.grid_resolution, 51);

        let mut clash = PipelineConfig::from_toml("seed = 1\n[data]\ngrid_resolution = 21").unwrap();
        assert!(clash.merge_scene(&scene).is_err());
    }
}
