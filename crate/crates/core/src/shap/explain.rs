use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::value::{value_mask, value_retrain, BackgroundSet, Predictor, SubsetModels};
use super::{shapley_exact, ShapAttribution, Variant};
use crate::error::{Error, Result};
use crate::exec;
use crate::features::Feature;
use crate::ingest::{alpha_percent, AlignedDemonstration};
use crate::lstm::train::{raw_window, TrainedModel};

/// Tolerance on `phi0 + sum(phi) = f(x)`.
pub const LOCAL_ACCURACY_TOL: f64 = 1e-9;

pub enum ValueSource<'a> {
    Mask {
        model: &'a TrainedModel,
        background: &'a BackgroundSet,
    },
    Retrain(&'a SubsetModels),
}

impl ValueSource<'_> {
    pub fn variant(&self) -> Variant {
        match self {
            ValueSource::Mask { .. } => Variant::Mask,
            ValueSource::Retrain(_) => Variant::Retrain,
        }
    }
}

fn check_local_accuracy(attr: ShapAttribution, step: usize, what: &str) -> Result<ShapAttribution> {
    let err = attr.local_accuracy_error();
    if !(err < LOCAL_ACCURACY_TOL) {
        return Err(Error::Numeric { step, what: format!("local accuracy violated by {err:e} for {what}") });
    }
    Ok(attr)
}

/// Masking-variant attribution of one raw window.
pub fn explain_window<P: Predictor + ?Sized>(model: &P, window: &[f64], background: &BackgroundSet) -> Result<ShapAttribution> {
    let attr = shapley_exact(model.n_inputs(), |mask| value_mask(model, window, mask, background))?;
    check_local_accuracy(attr, model.steps(), "window")
}

/// Shapley attribution of the prediction at grid index `end` of `demo`.
pub fn explain_moment(demo: &AlignedDemonstration, end: usize, source: &ValueSource) -> Result<ShapAttribution> {
    if end >= demo.grid.len() {
        return Err(Error::Contract(format!("grid index {end} outside demonstration {}", demo.demo_id)));
    }
    let attr = match source {
        ValueSource::Mask { model, background } => {
            let window = raw_window(demo, &model.config.inputs, model.config.window, end);
            shapley_exact(model.config.inputs.len(), |mask| value_mask(*model, &window, mask, background))?
        }
        ValueSource::Retrain(models) => shapley_exact(models.m, |mask| value_retrain(models, demo, end, mask))?,
    };
    check_local_accuracy(attr, end, &format!("demo {}", demo.demo_id))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExplainConfig {
    /// Number of background references; 1 means the per-moment mean window.
    pub background_k: usize,
    pub seed: u64,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        ExplainConfig { background_k: 1, seed: 0 }
    }
}

/// Shapley values for demonstrations x grid moments x features, stored
/// row-major in that order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaliencyTensor {
    pub variant: Variant,
    pub demo_ids: Vec<u64>,
    /// Decision progress in percent for each grid column.
    pub alphas: Vec<f64>,
    pub features: Vec<Feature>,
    pub phi: Vec<f64>,
    /// Raw feature value at the explained moment, same layout as `phi`.
    pub values: Vec<f64>,
    pub fx: Vec<f64>,
    pub phi0: Vec<f64>,
}

impl SaliencyTensor {
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.demo_ids.len(), self.alphas.len(), self.features.len())
    }

    fn idx(&self, d: usize, a: usize, i: usize) -> usize {
        let (_, na, m) = self.dims();
        (d * na + a) * m + i
    }

    pub fn phi_at(&self, d: usize, a: usize, i: usize) -> f64 {
        self.phi[self.idx(d, a, i)]
    }

    pub fn value_at(&self, d: usize, a: usize, i: usize) -> f64 {
        self.values[self.idx(d, a, i)]
    }

    /// Samples of feature `i`'s Shapley value across demonstrations at moment `a`.
    pub fn samples(&self, a: usize, i: usize) -> Vec<f64> {
        (0..self.demo_ids.len()).map(|d| self.phi_at(d, a, i)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let (d, a, m) = self.dims();
        if self.phi.len() != d * a * m || self.values.len() != d * a * m || self.fx.len() != d * a || self.phi0.len() != d * a {
            return Err(Error::Contract("saliency tensor dimensions are inconsistent".into()));
        }
        if self.phi.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric { step: 0, what: "non-finite Shapley value".into() });
        }
        Ok(())
    }

    /// Index of the grid moment nearest to `alpha` percent.
    pub fn nearest_alpha(&self, alpha: f64) -> usize {
        let mut best = 0;
        for (k, a) in self.alphas.iter().enumerate() {
            if (a - alpha).abs() < (self.alphas[best] - alpha).abs() {
                best = k;
            }
        }
        best
    }
}

/// Explains every demonstration at every listed grid index with the
/// masking value function; backgrounds come from the training split.
pub fn explain_all(
    model: &TrainedModel,
    demos: &[AlignedDemonstration],
    train: &[AlignedDemonstration],
    grid_indices: &[usize],
    cfg: &ExplainConfig,
) -> Result<SaliencyTensor> {
    let backgrounds = grid_indices
        .iter()
        .map(|&end| {
            if cfg.background_k <= 1 {
                BackgroundSet::mean_at(train, &model.config, end)
            } else {
                BackgroundSet::sample_at(train, &model.config, end, cfg.background_k, cfg.seed)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    assemble(model.config.inputs.clone(), Variant::Mask, demos, grid_indices, |d, a| {
        let source = ValueSource::Mask { model, background: &backgrounds[a] };
        explain_moment(d, grid_indices[a], &source)
    })
}

/// Same layout as [`explain_all`] using retrained subset models.
pub fn explain_all_retrain(
    models: &SubsetModels,
    inputs: &[Feature],
    demos: &[AlignedDemonstration],
    grid_indices: &[usize],
) -> Result<SaliencyTensor> {
    let source = ValueSource::Retrain(models);
    assemble(inputs.to_vec(), Variant::Retrain, demos, grid_indices, |d, a| {
        explain_moment(d, grid_indices[a], &source)
    })
}

fn assemble<F>(
    features: Vec<Feature>,
    variant: Variant,
    demos: &[AlignedDemonstration],
    grid_indices: &[usize],
    explain: F,
) -> Result<SaliencyTensor>
where
    F: Fn(&AlignedDemonstration, usize) -> Result<ShapAttribution> + Sync + Send,
{
    let na = grid_indices.len();
    let resolution = demos.first().map_or(2, |d| d.grid.len());
    let attrs = exec::try_map_range(demos.len() * na, |k| explain(&demos[k / na], k % na))?;
    let m = features.len();
    let mut t = SaliencyTensor {
        variant,
        demo_ids: demos.iter().map(|d| d.demo_id).collect(),
        alphas: grid_indices.iter().map(|&e| alpha_percent(e, resolution)).collect(),
        features,
        phi: Vec::with_capacity(attrs.len() * m),
        values: Vec::with_capacity(attrs.len() * m),
        fx: Vec::with_capacity(attrs.len()),
        phi0: Vec::with_capacity(attrs.len()),
    };
    for (k, attr) in attrs.into_iter().enumerate() {
        let fv = &demos[k / na].grid[grid_indices[k % na]];
        t.phi.extend_from_slice(&attr.phi);
        t.values.extend(t.features.iter().map(|f| fv.get(*f)));
        t.fx.push(attr.fx);
        t.phi0.push(attr.phi0);
    }
    t.validate()?;
    Ok(t)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSummary {
    pub feature: Feature,
    pub mean_abs_phi: f64,
    pub mean_phi: f64,
    /// `(feature value, phi)` per demonstration.
    pub pairs: Vec<(f64, f64)>,
}

/// Per-feature mean |phi|, mean phi and raw pairs at grid column `a`.
pub fn saliency_summary(t: &SaliencyTensor, a: usize) -> Vec<FeatureSummary> {
    let n = t.demo_ids.len() as f64;
    t.features
        .iter()
        .enumerate()
        .map(|(i, &feature)| {
            let pairs: Vec<(f64, f64)> = (0..t.demo_ids.len()).map(|d| (t.value_at(d, a, i), t.phi_at(d, a, i))).collect();
            FeatureSummary {
                feature,
                mean_abs_phi: pairs.iter().map(|p| p.1.abs()).sum::<f64>() / n,
                mean_phi: pairs.iter().map(|p| p.1).sum::<f64>() / n,
                pairs,
            }
        })
        .collect()
}

const SALIENCY_HEADER: [&str; 8] = ["demo_id", "alpha", "feature", "phi", "feature_value", "fx", "phi0", "variant"];

pub fn write_saliency_csv<W: Write>(out: W, tensors: &[&SaliencyTensor]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Error::Integrity(format!("writing saliency csv: {e}"));
    w.write_record(SALIENCY_HEADER).map_err(err)?;
    for t in tensors {
        let (nd, na, m) = t.dims();
        for d in 0..nd {
            for a in 0..na {
                for i in 0..m {
                    w.write_record([
                        t.demo_ids[d].to_string(),
                        t.alphas[a].to_string(),
                        t.features[i].name().to_string(),
                        t.phi_at(d, a, i).to_string(),
                        t.value_at(d, a, i).to_string(),
                        t.fx[d * na + a].to_string(),
                        t.phi0[d * na + a].to_string(),
                        t.variant.name().to_string(),
                    ])
                    .map_err(err)?;
                }
            }
        }
    }
    w.flush().map_err(|e| Error::Integrity(format!("writing saliency csv: {e}")))
}

/// Parses `saliency.csv` back into one tensor per variant, in file order.
pub fn read_saliency_csv<R: Read>(source: R) -> Result<Vec<SaliencyTensor>> {
    let mut rdr = csv::Reader::from_reader(source);
    let mut out: Vec<SaliencyTensor> = Vec::new();
    let mut rows: Vec<(Variant, u64, f64, Feature, [f64; 4])> = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let row = k + 1;
        let rec = rec.map_err(|e| Error::Parse { row, msg: e.to_string() })?;
        if rec.len() != SALIENCY_HEADER.len() {
            return Err(Error::Parse { row, msg: "wrong column count".into() });
        }
        let num = |c: usize| rec[c].parse::<f64>().map_err(|e| Error::Parse { row, msg: format!("{}: {e}", SALIENCY_HEADER[c]) });
        let variant = match &rec[7] {
            "mask" => Variant::Mask,
            "retrain" => Variant::Retrain,
            other => return Err(Error::Parse { row, msg: format!("unknown variant `{other}`") }),
        };
        let id = rec[0].parse::<u64>().map_err(|e| Error::Parse { row, msg: format!("demo_id: {e}") })?;
        let feature: Feature = rec[2].parse().map_err(|_| Error::Parse { row, msg: format!("unknown feature `{}`", &rec[2]) })?;
        rows.push((variant, id, num(1)?, feature, [num(3)?, num(4)?, num(5)?, num(6)?]));
    }
    for variant in [Variant::Mask, Variant::Retrain] {
        let vr: Vec<_> = rows.iter().filter(|r| r.0 == variant).collect();
        if vr.is_empty() {
            continue;
        }
        let mut t = SaliencyTensor {
            variant,
            demo_ids: Vec::new(),
            alphas: Vec::new(),
            features: Vec::new(),
            phi: Vec::new(),
            values: Vec::new(),
            fx: Vec::new(),
            phi0: Vec::new(),
        };
        for r in &vr {
            if t.demo_ids.last() != Some(&r.1) {
                t.demo_ids.push(r.1);
            }
            if t.demo_ids.len() == 1 {
                if !t.alphas.contains(&r.2) {
                    t.alphas.push(r.2);
                }
                if t.alphas.len() == 1 {
                    t.features.push(r.3);
                }
            }
        }
        let m = t.features.len();
        for (k, r) in vr.iter().enumerate() {
            if r.3 != t.features[k % m] {
                return Err(Error::Integrity("saliency rows are not in demo/alpha/feature order".into()));
            }
            t.phi.push(r.4[0]);
            t.values.push(r.4[1]);
            if k % m == 0 {
                t.fx.push(r.4[2]);
                t.phi0.push(r.4[3]);
            }
        }
        t.validate()?;
        out.push(t);
    }
    Ok(out)
}

const SUMMARY_HEADER: [&str; 5] = ["alpha", "feature", "mean_abs_phi", "mean_phi", "variant"];

pub fn write_summary_csv<W: Write>(out: W, tensors: &[&SaliencyTensor]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Error::Integrity(format!("writing summary csv: {e}"));
    w.write_record(SUMMARY_HEADER).map_err(err)?;
    for t in tensors {
        for a in 0..t.alphas.len() {
            for s in saliency_summary(t, a) {
                w.write_record([
                    t.alphas[a].to_string(),
                    s.feature.name().to_string(),
                    s.mean_abs_phi.to_string(),
                    s.mean_phi.to_string(),
                    t.variant.name().to_string(),
                ])
                .map_err(err)?;
            }
        }
    }
    w.flush().map_err(|e| Error::Integrity(format!("writing summary csv: {e}")))
}
