use std::io::Write;

use serde::{Deserialize, Serialize};

use super::trend::{trend_fit, Trend};
use super::{build_histogram, kl_divergence, mutual_information, shared_edges};
use crate::error::{Error, Result};
use crate::exec;
use crate::shap::SaliencyTensor;

/// Pseudo-count added to every bin of the 1-D histograms compared by KL.
pub const DEFAULT_KL_EPS: f64 = 0.5;
/// Pseudo-count added to every cell of the joint histogram.
pub const DEFAULT_MI_EPS: f64 = 1e-6;

/// Feature label of the cross-feature aggregate curves.
pub const AGGREGATE: &str = "AGG";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CurveKind {
    #[serde(rename = "KL")]
    Kl,
    #[serde(rename = "MI")]
    Mi,
}

impl CurveKind {
    pub fn name(self) -> &'static str {
        match self {
            CurveKind::Kl => "KL",
            CurveKind::Mi => "MI",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    #[default]
    Mean,
    Median,
}

impl Aggregation {
    fn apply(self, values: &mut [f64]) -> f64 {
        match self {
            Aggregation::Mean => values.iter().sum::<f64>() / values.len() as f64,
            Aggregation::Median => {
                values.sort_by(f64::total_cmp);
                let n = values.len();
                if n % 2 == 1 {
                    values[n / 2]
                } else {
                    0.5 * (values[n / 2 - 1] + values[n / 2])
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UncertaintyConfig {
    pub kl_bins: usize,
    /// Bins per axis of the joint histogram.
    pub mi_bins: usize,
    pub kl_eps: f64,
    pub mi_eps: f64,
    pub trend_degree: usize,
    pub aggregation: Aggregation,
}

impl Default for UncertaintyConfig {
    fn default() -> Self {
        UncertaintyConfig { kl_bins: 20, mi_bins: 10, kl_eps: DEFAULT_KL_EPS, mi_eps: DEFAULT_MI_EPS, trend_degree: 1, aggregation: Aggregation::Mean }
    }
}

impl UncertaintyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.kl_bins < 1 || self.mi_bins < 1 {
            return Err(Error::Config("histogram bin counts must be positive".into()));
        }
        for eps in [self.kl_eps, self.mi_eps] {
            if !(eps >= 0.0 && eps.is_finite()) {
                return Err(Error::Config(format!("smoothing eps must be a non-negative number, got {eps}")));
            }
        }
        if self.trend_degree < 1 {
            return Err(Error::Config("trend degree must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyCurve {
    pub kind: CurveKind,
    /// Feature name or [`AGGREGATE`].
    pub feature: String,
    /// Midpoint of each adjacent pair, in percent.
    pub alpha_mid: Vec<f64>,
    /// One value in nats per adjacent pair.
    pub points: Vec<f64>,
    pub trend: Trend,
    pub n_samples: usize,
    /// Set when there are fewer samples than bins.
    pub small_sample: bool,
    /// Samples clamped into boundary bins, summed over the curve.
    pub clamped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSet {
    pub config: UncertaintyConfig,
    pub kl: UncertaintyCurve,
    pub mi: UncertaintyCurve,
    pub per_feature: Vec<UncertaintyCurve>,
}

impl CurveSet {
    pub fn all(&self) -> impl Iterator<Item = &UncertaintyCurve> {
        let (kl, mi): (Vec<_>, Vec<_>) = self.per_feature.iter().partition(|c| c.kind == CurveKind::Kl);
        std::iter::once(&self.kl).chain(kl).chain(std::iter::once(&self.mi)).chain(mi)
    }
}

struct PairResult {
    kl: f64,
    mi: f64,
    clamped: usize,
}

/// KL and MI between every pair of adjacent moments, per feature and
/// aggregated across features.
pub fn uncertainty_curves(t: &SaliencyTensor, cfg: &UncertaintyConfig) -> Result<CurveSet> {
    cfg.validate()?;
    t.validate()?;
    let (nd, na, m) = t.dims();
    if na < 2 || nd < 2 || m == 0 {
        return Err(Error::Rejected(format!(
            "uncertainty curves need at least 2 moments and 2 demonstrations, got {na} and {nd}"
        )));
    }
    let pairs = na - 1;
    let results = exec::try_map_range(pairs * m, |k| {
        let (a, i) = (k / m, k % m);
        let x = t.samples(a, i);
        let y = t.samples(a + 1, i);
        let edges = shared_edges(x.iter().chain(&y), cfg.kl_bins)?;
        let p = build_histogram(&x, &edges, cfg.kl_eps)?;
        let q = build_histogram(&y, &edges, cfg.kl_eps)?;
        let kl = kl_divergence(&p, &q)?;
        let mi_edges = shared_edges(x.iter().chain(&y), cfg.mi_bins)?;
        let mi = mutual_information(&x, &y, &mi_edges, cfg.mi_eps)?;
        Ok::<_, Error>(PairResult { kl, mi: mi.value, clamped: p.clamped + q.clamped })
    })?;
    let alpha_mid: Vec<f64> = t.alphas.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    let small_sample = nd < cfg.kl_bins;

    let curve = |kind: CurveKind, feature: String, points: Vec<f64>, clamped: usize| -> Result<UncertaintyCurve> {
        Ok(UncertaintyCurve {
            kind,
            feature,
            trend: trend_fit(&alpha_mid, &points, cfg.trend_degree)?,
            alpha_mid: alpha_mid.clone(),
            points,
            n_samples: nd,
            small_sample,
            clamped,
        })
    };
    let column = |i: usize, f: fn(&PairResult) -> f64| (0..pairs).map(|a| f(&results[a * m + i])).collect::<Vec<f64>>();
    let aggregate = |f: fn(&PairResult) -> f64| {
        (0..pairs)
            .map(|a| {
                let mut v: Vec<f64> = results[a * m..(a + 1) * m].iter().map(f).collect();
                cfg.aggregation.apply(&mut v)
            })
            .collect::<Vec<f64>>()
    };
    let clamped_of = |i: usize| (0..pairs).map(|a| results[a * m + i].clamped).sum::<usize>();
    let total_clamped = (0..m).map(clamped_of).sum();

    let mut per_feature = Vec::with_capacity(2 * m);
    for (kind, f) in [(CurveKind::Kl, (|r: &PairResult| r.kl) as fn(&PairResult) -> f64), (CurveKind::Mi, |r| r.mi)] {
        for (i, feat) in t.features.iter().enumerate() {
            per_feature.push(curve(kind, feat.name().to_string(), column(i, f), clamped_of(i))?);
        }
    }
    Ok(CurveSet {
        config: cfg.clone(),
        kl: curve(CurveKind::Kl, AGGREGATE.into(), aggregate(|r| r.kl), total_clamped)?,
        mi: curve(CurveKind::Mi, AGGREGATE.into(), aggregate(|r| r.mi), total_clamped)?,
        per_feature,
    })
}

const CURVES_HEADER: [&str; 6] = ["kind", "alpha_mid", "value_nats", "feature", "trend_value", "band"];

pub fn write_curves_csv<W: Write>(out: W, set: &CurveSet) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Error::Integrity(format!("writing curves csv: {e}"));
    w.write_record(CURVES_HEADER).map_err(err)?;
    for c in set.all() {
        for k in 0..c.points.len() {
            w.write_record([
                c.kind.name().to_string(),
                c.alpha_mid[k].to_string(),
                c.points[k].to_string(),
                c.feature.clone(),
                c.trend.fitted[k].to_string(),
                c.trend.band[k].to_string(),
            ])
            .map_err(err)?;
        }
    }
    w.flush().map_err(|e| Error::Integrity(format!("writing curves csv: {e}")))
}

pub fn write_curves_json<W: Write>(out: W, set: &CurveSet) -> Result<()> {
    serde_json::to_writer_pretty(out, set).map_err(|e| Error::Integrity(format!("writing curves json: {e}")))
}
