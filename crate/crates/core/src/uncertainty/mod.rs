//! Histogram estimators of how per-moment saliency distributions change
//! between adjacent decision moments.

mod curves;
mod trend;

pub use curves::{
    uncertainty_curves, write_curves_csv, write_curves_json, Aggregation, CurveKind, CurveSet, UncertaintyConfig, UncertaintyCurve,
    AGGREGATE, DEFAULT_KL_EPS, DEFAULT_MI_EPS,
};
pub use trend::{polyfit, rolling_band, trend_fit, Trend};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative widening of pooled min/max when building shared edges.
pub const EDGE_MARGIN: f64 = 0.01;

/// A smoothed, normalized 1-D histogram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaliencyDistribution {
    pub edges: Vec<f64>,
    pub probs: Vec<f64>,
    pub n_samples: usize,
    /// Samples that fell outside the edges and were moved into a boundary bin.
    pub clamped: usize,
}

impl SaliencyDistribution {
    pub fn bins(&self) -> usize {
        self.probs.len()
    }
}

/// `bins + 1` evenly spaced edges over the pooled range of `samples`,
/// widened by [`EDGE_MARGIN`] on both sides. A degenerate range is widened
/// to unit width around its value.
pub fn shared_edges<'a, I>(samples: I, bins: usize) -> Result<Vec<f64>>
where
    I: IntoIterator<Item = &'a f64>,
{
    if bins == 0 {
        return Err(Error::Contract("histogram needs at least one bin".into()));
    }
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in samples {
        if !v.is_finite() {
            return Err(Error::Numeric { step: 0, what: "non-finite sample".into() });
        }
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if lo > hi {
        return Err(Error::Rejected("no samples to bin".into()));
    }
    let span = hi - lo;
    let (lo, hi) = if span > 0.0 {
        (lo - EDGE_MARGIN * span, hi + EDGE_MARGIN * span)
    } else {
        let half = 0.5 * lo.abs().max(1.0);
        (lo - half, hi + half)
    };
    let step = (hi - lo) / bins as f64;
    let mut edges: Vec<f64> = (0..bins).map(|k| lo + step * k as f64).collect();
    edges.push(hi);
    Ok(edges)
}

fn check_edges(edges: &[f64]) -> Result<()> {
    if edges.len() < 2 || edges.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Contract("histogram edges must be strictly increasing with at least one bin".into()));
    }
    Ok(())
}

/// Bin index of `v`: right-open bins, last bin closed, out-of-range values
/// clamped. Returns the index and whether clamping happened.
fn bin_of(edges: &[f64], v: f64) -> (usize, bool) {
    let b = edges.len() - 1;
    if v < edges[0] {
        return (0, true);
    }
    if v > edges[b] {
        return (b - 1, true);
    }
    // first edge strictly greater than v, minus one
    let k = edges.partition_point(|&e| e <= v);
    (k.saturating_sub(1).min(b - 1), false)
}

fn smooth(counts: &[f64], n: usize, eps: f64) -> Vec<f64> {
    let total = n as f64 + eps * counts.len() as f64;
    counts.iter().map(|c| (c + eps) / total).collect()
}

pub fn build_histogram(samples: &[f64], edges: &[f64], eps: f64) -> Result<SaliencyDistribution> {
    if samples.len() < 2 {
        return Err(Error::Rejected(format!("histogram needs at least 2 samples, got {}", samples.len())));
    }
    check_edges(edges)?;
    if !(eps >= 0.0) {
        return Err(Error::Config(format!("smoothing eps must be non-negative, got {eps}")));
    }
    let mut counts = vec![0.0; edges.len() - 1];
    let mut clamped = 0;
    for &v in samples {
        if !v.is_finite() {
            return Err(Error::Numeric { step: 0, what: "non-finite sample".into() });
        }
        let (k, c) = bin_of(edges, v);
        counts[k] += 1.0;
        clamped += c as usize;
    }
    Ok(SaliencyDistribution {
        edges: edges.to_vec(),
        probs: smooth(&counts, samples.len(), eps),
        n_samples: samples.len(),
        clamped,
    })
}

/// `sum p ln(p/q)` over raw probability vectors.
pub fn kl_probs(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Contract("distributions have different bin counts".into()));
    }
    let mut d = 0.0;
    for (k, (&pk, &qk)) in p.iter().zip(q).enumerate() {
        if pk == 0.0 {
            continue;
        }
        if qk == 0.0 {
            return Err(Error::DivergenceUndefined { bin: k });
        }
        d += pk * (pk / qk).ln();
    }
    Ok(d.max(0.0))
}

/// KL divergence in nats between two histograms on identical edges.
pub fn kl_divergence(p: &SaliencyDistribution, q: &SaliencyDistribution) -> Result<f64> {
    if p.edges != q.edges {
        return Err(Error::Contract("KL divergence requires identical bin edges".into()));
    }
    kl_probs(&p.probs, &q.probs)
}

/// Shannon entropy in nats with `0 ln 0 = 0`.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&v| v > 0.0).map(|&v| v * v.ln()).sum::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MutualInformation {
    /// `H(X) + H(Y) - H(X,Y)`, clamped at zero against rounding.
    pub value: f64,
    pub h_x: f64,
    pub h_y: f64,
    pub h_xy: f64,
    pub h_x_given_y: f64,
    pub h_y_given_x: f64,
}

impl MutualInformation {
    /// The conditional-entropy form `H(X,Y) - H(X|Y) - H(Y|X)`.
    pub fn conditional_form(&self) -> f64 {
        self.h_xy - self.h_x_given_y - self.h_y_given_x
    }

    pub fn marginal_form(&self) -> f64 {
        self.h_x + self.h_y - self.h_xy
    }
}

/// Tolerance between the two forms of mutual information.
pub const MI_IDENTITY_TOL: f64 = 1e-12;

/// Mutual information of a joint distribution given row-major as `bx x by`.
pub fn mutual_information_from_joint(joint: &[f64], bx: usize, by: usize) -> Result<MutualInformation> {
    if joint.len() != bx * by || bx == 0 || by == 0 {
        return Err(Error::Contract("joint table does not match its dimensions".into()));
    }
    let mut px = vec![0.0; bx];
    let mut py = vec![0.0; by];
    for i in 0..bx {
        for j in 0..by {
            px[i] += joint[i * by + j];
            py[j] += joint[i * by + j];
        }
    }
    let (mut h_x_given_y, mut h_y_given_x) = (0.0, 0.0);
    for i in 0..bx {
        for j in 0..by {
            let p = joint[i * by + j];
            if p > 0.0 {
                h_x_given_y -= p * (p / py[j]).ln();
                h_y_given_x -= p * (p / px[i]).ln();
            }
        }
    }
    let mi = MutualInformation {
        value: 0.0,
        h_x: entropy(&px),
        h_y: entropy(&py),
        h_xy: entropy(joint),
        h_x_given_y,
        h_y_given_x,
    };
    let a = mi.marginal_form();
    let b = mi.conditional_form();
    if !((a - b).abs() <= MI_IDENTITY_TOL) {
        return Err(Error::Numeric {
            step: 0,
            what: format!("mutual information forms disagree: {a} vs {b}"),
        });
    }
    Ok(MutualInformation { value: a.max(0.0), ..mi })
}

/// Mutual information between paired samples on a smoothed joint histogram.
/// Both axes use the same edges.
pub fn mutual_information(x: &[f64], y: &[f64], edges: &[f64], eps: f64) -> Result<MutualInformation> {
    if x.len() != y.len() {
        return Err(Error::Contract(format!("unpaired samples: {} vs {}", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(Error::Rejected(format!("mutual information needs at least 2 pairs, got {}", x.len())));
    }
    check_edges(edges)?;
    let b = edges.len() - 1;
    let mut counts = vec![0.0; b * b];
    for (&xv, &yv) in x.iter().zip(y) {
        if !xv.is_finite() || !yv.is_finite() {
            return Err(Error::Numeric { step: 0, what: "non-finite sample".into() });
        }
        counts[bin_of(edges, xv).0 * b + bin_of(edges, yv).0] += 1.0;
    }
    mutual_information_from_joint(&smooth(&counts, x.len(), eps), b, b)
}
