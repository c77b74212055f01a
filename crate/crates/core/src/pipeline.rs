//! Stage orchestration over an artifact directory.
//!
//! Each stage reads and writes fixed file names, so any stage can be rerun
//! on its own. `manifest.json` records the sha256 of every stage's inputs and
//! outputs; a stage whose recorded inputs and outputs still match is skipped.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{PipelineConfig, SceneFile, Source};
use crate::error::{Error, Result};
use crate::exec;
use crate::ingest::{
    align_to_grid, extract_merge_demonstrations, parse_tracks, read_aligned_csv, split_dataset, write_aligned_csv,
    AlignedDemonstration, DatasetSplit,
};
use crate::lstm::{artifact, train, TrainConfig, TrainedModel};
use crate::metrics::{aggregate, demo_metrics, Aggregate, DemoMetrics};
use crate::shap::{
    explain_all, explain_all_retrain, read_saliency_csv, retrain_subset_models, saliency_summary, write_saliency_csv,
    write_summary_csv, SaliencyTensor, Variant,
};
use crate::synth::{generate_synthetic_dataset, SynthTruth};
use crate::uncertainty::{uncertainty_curves, write_curves_csv, write_curves_json, CurveSet};

pub const CONFIG: &str = "config.toml";
pub const MANIFEST: &str = "manifest.json";
pub const ALIGNED: &str = "aligned.csv";
pub const SPLIT: &str = "split.json";
pub const TRUTH: &str = "truth.json";
pub const MODEL: &str = "model.json";
pub const METRICS: &str = "metrics.json";
pub const SALIENCY: &str = "saliency.csv";
pub const SUMMARY: &str = "summary.csv";
pub const CURVES_CSV: &str = "curves.csv";
pub const CURVES_JSON: &str = "curves.json";
pub const REPORT: &str = "report.md";

/// Decision moments listed in the report, in percent.
pub const KEY_MOMENTS: [f64; 3] = [0.0, 50.0, 100.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Ingest,
    Train,
    Eval,
    Explain,
    Quantify,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 6] = [Stage::Ingest, Stage::Train, Stage::Eval, Stage::Explain, Stage::Quantify, Stage::Report];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Train => "train",
            Stage::Eval => "eval",
            Stage::Explain => "explain",
            Stage::Quantify => "quantify",
            Stage::Report => "report",
        }
    }

    fn inputs(self) -> &'static [&'static str] {
        match self {
            Stage::Ingest => &[],
            Stage::Train => &[ALIGNED, SPLIT],
            Stage::Eval => &[ALIGNED, SPLIT, MODEL],
            Stage::Explain => &[ALIGNED, SPLIT, MODEL],
            Stage::Quantify => &[SALIENCY],
            Stage::Report => &[METRICS, SALIENCY, CURVES_JSON],
        }
    }

    fn outputs(self, cfg: &PipelineConfig) -> Vec<&'static str> {
        match self {
            Stage::Ingest if cfg.data.source == Source::Synth => vec![ALIGNED, SPLIT, TRUTH],
            Stage::Ingest => vec![ALIGNED, SPLIT],
            Stage::Train => vec![MODEL],
            Stage::Eval => vec![METRICS],
            Stage::Explain => vec![SALIENCY, SUMMARY],
            Stage::Quantify => vec![CURVES_CSV, CURVES_JSON],
            Stage::Report => vec![REPORT],
        }
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown stage `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
struct StageRecord {
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
struct Manifest {
    stages: BTreeMap<String, StageRecord>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

/// Reads an artifact, reporting a missing file by name.
pub fn read_artifact(dir: &Path, name: &str) -> Result<Vec<u8>> {
    let path = dir.join(name);
    fs::read(&path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingArtifact(path),
        _ => Error::io(path, e),
    })
}

fn write_artifact(dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, bytes).map_err(|e| Error::io(path, e))
}

fn json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut v = serde_json::to_vec_pretty(value).map_err(|e| Error::Integrity(e.to_string()))?;
    v.push(b'\n');
    Ok(v)
}

fn from_json<T: for<'de> Deserialize<'de>>(dir: &Path, name: &str) -> Result<T> {
    serde_json::from_slice(&read_artifact(dir, name)?)
        .map_err(|e| Error::Integrity(format!("{}: {e}", dir.join(name).display())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsFile {
    pub aggregate: Aggregate,
    pub final_train_loss: f64,
    pub per_demo: Vec<DemoMetrics>,
}

/// Runs pipeline stages against one artifact directory.
pub struct Pipeline {
    pub config: PipelineConfig,
    pub out: PathBuf,
    /// Rerun stages even when the manifest says they are current.
    pub force: bool,
}

impl Pipeline {
    pub fn new(config: PipelineConfig, out: impl Into<PathBuf>) -> Result<Self> {
        config.validate()?;
        Ok(Pipeline { config, out: out.into(), force: false })
    }

    /// Runs every stage in order.
    pub fn run(&mut self) -> Result<()> {
        for stage in Stage::ALL {
            self.run_stage(stage)?;
        }
        Ok(())
    }

    pub fn run_stage(&mut self, stage: Stage) -> Result<()> {
        self.run_stage_inner(stage).map_err(|e| e.in_stage(stage.name()))
    }

    fn run_stage_inner(&mut self, stage: Stage) -> Result<()> {
        fs::create_dir_all(&self.out).map_err(|e| Error::io(&self.out, e))?;
        let scene = self.prepare_config()?;
        let config_text = self.config.to_toml();
        write_artifact(&self.out, CONFIG, config_text.as_bytes())?;

        let mut inputs = BTreeMap::new();
        inputs.insert(CONFIG.to_string(), sha256_hex(config_text.as_bytes()));
        if stage == Stage::Ingest && self.config.data.source == Source::Csv {
            for p in [self.config.data.tracks.as_ref(), self.config.data.scene.as_ref()].into_iter().flatten() {
                let bytes = fs::read(p).map_err(|e| Error::io(p, e))?;
                inputs.insert(p.display().to_string(), sha256_hex(&bytes));
            }
        }
        for name in stage.inputs() {
            inputs.insert(name.to_string(), sha256_hex(&read_artifact(&self.out, name)?));
        }

        let mut manifest = self.load_manifest();
        let outputs = stage.outputs(&self.config);
        if !self.force {
            if let Some(rec) = manifest.stages.get(stage.name()) {
                if rec.inputs == inputs && self.outputs_match(rec, &outputs) {
                    log::info!("stage {} is up to date", stage.name());
                    return Ok(());
                }
            }
        }
        log::info!("running stage {}", stage.name());
        match stage {
            Stage::Ingest => self.ingest(scene.as_ref())?,
            Stage::Train => self.train()?,
            Stage::Eval => self.eval()?,
            Stage::Explain => self.explain()?,
            Stage::Quantify => self.quantify()?,
            Stage::Report => {
                let text = report(&self.out)?;
                write_artifact(&self.out, REPORT, text.as_bytes())?;
            }
        }
        let mut rec = StageRecord { inputs, outputs: BTreeMap::new() };
        for name in outputs {
            rec.outputs.insert(name.to_string(), sha256_hex(&read_artifact(&self.out, name)?));
        }
        manifest.stages.insert(stage.name().to_string(), rec);
        write_artifact(&self.out, MANIFEST, &json(&manifest)?)
    }

    fn prepare_config(&mut self) -> Result<Option<SceneFile>> {
        if self.config.data.source != Source::Csv {
            return Ok(None);
        }
        let path = self.config.data.scene.clone().ok_or_else(|| Error::Config("data.scene is required".into()))?;
        let scene = SceneFile::load(&path)?;
        self.config.merge_scene(&scene)?;
        Ok(Some(scene))
    }

    fn load_manifest(&self) -> Manifest {
        fs::read(self.out.join(MANIFEST))
            .ok()
            .and_then(|b| serde_json::from_slice(&b).ok())
            .unwrap_or_default()
    }

    fn outputs_match(&self, rec: &StageRecord, outputs: &[&str]) -> bool {
        outputs.iter().all(|name| match (rec.outputs.get(*name), fs::read(self.out.join(name))) {
            (Some(h), Ok(bytes)) => *h == sha256_hex(&bytes),
            _ => false,
        })
    }

    fn ingest(&self, scene: Option<&SceneFile>) -> Result<()> {
        let a = self.config.data.grid_resolution;
        let demos = match (self.config.data.source, scene) {
            (Source::Synth, _) => {
                let synth = self.config.synth_config()?;
                write_artifact(&self.out, TRUTH, &json(&SynthTruth::new(&synth))?)?;
                generate_synthetic_dataset(&synth)?
            }
            (Source::Csv, Some(scene)) => {
                let path = self.config.data.tracks.as_ref().ok_or_else(|| Error::Config("data.tracks is required".into()))?;
                let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
                let geometry = scene.geometry();
                let tracks = parse_tracks(std::io::BufReader::new(file), &geometry)?;
                extract_merge_demonstrations(&tracks, &geometry, &self.config.extract_config(scene))?
            }
            (Source::Csv, None) => return Err(Error::Config("csv source needs a scene file".into())),
        };
        log::info!("{} demonstrations", demos.len());
        let aligned = exec::map(&demos, |d| align_to_grid(d, a)).into_iter().collect::<Result<Vec<_>>>()?;
        let ids: Vec<u64> = aligned.iter().map(|d| d.demo_id).collect();
        let split = split_dataset(&ids, self.config.data.split_ratio, self.config.seed)?;
        let mut buf = Vec::new();
        write_aligned_csv(&mut buf, &aligned)?;
        write_artifact(&self.out, ALIGNED, &buf)?;
        write_artifact(&self.out, SPLIT, &json(&split)?)
    }

    fn load_data(&self) -> Result<(Vec<AlignedDemonstration>, DatasetSplit)> {
        let aligned = read_aligned_csv(read_artifact(&self.out, ALIGNED)?.as_slice())?;
        let split: DatasetSplit = from_json(&self.out, SPLIT)?;
        Ok((aligned, split))
    }

    fn load_model(&self) -> Result<TrainedModel> {
        artifact::load(&self.out.join(MODEL))
    }

    fn train(&self) -> Result<()> {
        let (aligned, split) = self.load_data()?;
        let (tr, _) = partition(&aligned, &split);
        let model = train::train(&tr, &self.config.train_config()?)?;
        artifact::save(&model, &self.out.join(MODEL))
    }

    fn eval(&self) -> Result<()> {
        let (aligned, split) = self.load_data()?;
        let model = self.load_model()?;
        let (_, te) = partition(&aligned, &split);
        let out = model.config.output;
        let per_demo = exec::map(&te, |d| demo_metrics(d.demo_id, &model.predict_series(d)?, &d.series(out)))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        let file = MetricsFile {
            aggregate: aggregate(&per_demo)?,
            final_train_loss: model.loss_history.last().copied().unwrap_or(f64::NAN),
            per_demo,
        };
        write_artifact(&self.out, METRICS, &json(&file)?)
    }

    fn explain(&self) -> Result<()> {
        let (aligned, split) = self.load_data()?;
        let model = self.load_model()?;
        let (tr, _) = partition(&aligned, &split);
        let grid: Vec<usize> = (0..self.config.data.grid_resolution).collect();
        let mut tensors = Vec::new();
        if self.config.shap.variant == Variant::Mask {
            tensors.push(explain_all(&model, &aligned, &tr, &grid, &self.config.explain_config())?);
        }
        if self.config.shap.variant == Variant::Retrain || self.config.shap.retrain_check {
            let cfg = TrainConfig { epochs: self.config.shap.retrain_epochs, ..model.config.clone() };
            let models = retrain_subset_models(&tr, &cfg)?;
            tensors.push(explain_all_retrain(&models, &cfg.inputs, &aligned, &grid)?);
        }
        let refs: Vec<&SaliencyTensor> = tensors.iter().collect();
        let mut buf = Vec::new();
        write_saliency_csv(&mut buf, &refs)?;
        write_artifact(&self.out, SALIENCY, &buf)?;
        let mut buf = Vec::new();
        write_summary_csv(&mut buf, &refs)?;
        write_artifact(&self.out, SUMMARY, &buf)
    }

    fn quantify(&self) -> Result<()> {
        let tensor = primary_tensor(&self.out, self.config.shap.variant)?;
        let set = uncertainty_curves(&tensor, &self.config.uncertainty)?;
        if set.kl.small_sample {
            log::warn!("only {} demonstrations for {} bins", set.kl.n_samples, self.config.uncertainty.kl_bins);
        }
        let mut buf = Vec::new();
        write_curves_csv(&mut buf, &set)?;
        write_artifact(&self.out, CURVES_CSV, &buf)?;
        let mut buf = Vec::new();
        write_curves_json(&mut buf, &set)?;
        buf.push(b'\n');
        write_artifact(&self.out, CURVES_JSON, &buf)
    }
}

fn partition(aligned: &[AlignedDemonstration], split: &DatasetSplit) -> (Vec<AlignedDemonstration>, Vec<AlignedDemonstration>) {
    let pick = |ids: &[u64]| aligned.iter().filter(|d| ids.binary_search(&d.demo_id).is_ok()).cloned().collect();
    (pick(&split.train), pick(&split.test))
}

fn primary_tensor(dir: &Path, variant: Variant) -> Result<SaliencyTensor> {
    read_saliency_csv(read_artifact(dir, SALIENCY)?.as_slice())?
        .into_iter()
        .find(|t| t.variant == variant)
        .ok_or_else(|| Error::Integrity(format!("{SALIENCY} has no {} rows", variant.name())))
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

/// Markdown summary of a complete artifact directory.
pub fn report(dir: &Path) -> Result<String> {
    let config_text = String::from_utf8_lossy(&read_artifact(dir, CONFIG)?).into_owned();
    let config = PipelineConfig::from_toml(&config_text)?;
    let metrics: MetricsFile = from_json(dir, METRICS)?;
    let curves: CurveSet = from_json(dir, CURVES_JSON)?;
    let tensor = primary_tensor(dir, config.shap.variant)?;

    let mut s = String::new();
    let _ = writeln!(s, "# Merge saliency report\n");
    let _ = writeln!(s, "## Prediction\n");
    let a = &metrics.aggregate;
    let _ = writeln!(s, "- mean evaluation score (beta_MSE): {:.6}", a.beta_bar);
    let _ = writeln!(s, "- mean RMSE: {:.6}", a.rmse_bar);
    let _ = writeln!(s, "- test demonstrations scored: {} ({} excluded with constant truth)", a.n_valid, a.n_excluded);
    let _ = writeln!(s, "- final training loss: {:.6e}\n", metrics.final_train_loss);

    let _ = writeln!(s, "## Top features by mean |phi| ({} variant)\n", tensor.variant.name());
    for alpha in KEY_MOMENTS {
        let k = tensor.nearest_alpha(alpha);
        let mut summary = saliency_summary(&tensor, k);
        summary.sort_by(|x, y| y.mean_abs_phi.total_cmp(&x.mean_abs_phi));
        let top: Vec<String> = summary.iter().take(3).map(|f| format!("{} ({:.4})", f.feature.name(), f.mean_abs_phi)).collect();
        let _ = writeln!(s, "- alpha = {alpha}%: {}", top.join(", "));
    }

    let _ = writeln!(s, "\n## Uncertainty\n");
    let _ = writeln!(s, "- KL slope: {:.6e} per percent", curves.kl.trend.slope);
    let _ = writeln!(s, "- KL slope negative: {}", yes_no(curves.kl.trend.slope < 0.0));
    let _ = writeln!(s, "- MI slope: {:.6e} per percent", curves.mi.trend.slope);
    let _ = writeln!(s, "- MI slope positive: {}", yes_no(curves.mi.trend.slope > 0.0));
    if curves.kl.small_sample {
        let _ = writeln!(s, "- warning: {} samples per moment is below the bin count", curves.kl.n_samples);
    }
    if curves.kl.clamped > 0 {
        let _ = writeln!(s, "- samples clamped into boundary bins: {}", curves.kl.clamped);
    }

    let _ = writeln!(s, "\n## Configuration\n\n```toml\n{}```", config_text);
    Ok(s)
}
