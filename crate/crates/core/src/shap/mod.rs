//! Exact Shapley attribution by full coalition enumeration, the masking and
//! retraining value functions, and the per-moment saliency tensor.

mod explain;
mod value;

pub use explain::{
    explain_all, explain_all_retrain, explain_moment, explain_window, read_saliency_csv, saliency_summary, write_saliency_csv, write_summary_csv,
    ExplainConfig, FeatureSummary, SaliencyTensor, ValueSource, LOCAL_ACCURACY_TOL,
};
pub use value::{retrain_subset_models, subset_seed, value_mask, value_retrain, BackgroundSet, Predictor, SubsetModels};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest feature count accepted for full enumeration.
pub const MAX_FEATURES: usize = 20;

/// A coalition of present features, bit `i` set when feature `i` is present.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CoalitionMask {
    pub bits: u32,
    pub m: usize,
}

impl CoalitionMask {
    pub fn empty(m: usize) -> Self {
        CoalitionMask { bits: 0, m }
    }

    pub fn full(m: usize) -> Self {
        CoalitionMask { bits: ((1u64 << m) - 1) as u32, m }
    }

    pub fn contains(&self, i: usize) -> bool {
        self.bits >> i & 1 == 1
    }

    pub fn len(&self) -> usize {
        self.bits.count_ones() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.bits == 0
    }

    pub fn is_full(&self) -> bool {
        *self == CoalitionMask::full(self.m)
    }

    pub fn members(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.m).filter(|&i| self.contains(i))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Mask,
    Retrain,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Mask => "mask",
            Variant::Retrain => "retrain",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapAttribution {
    /// Value of the empty coalition.
    pub phi0: f64,
    pub phi: Vec<f64>,
    /// Value of the full coalition, the model output being explained.
    pub fx: f64,
}

impl ShapAttribution {
    pub fn local_accuracy_error(&self) -> f64 {
        (self.phi0 + self.phi.iter().sum::<f64>() - self.fx).abs()
    }
}

/// Shapley weight of a coalition of size `s` among `m` players,
/// `s! (m - s - 1)! / m! = 1 / (m * C(m - 1, s))`.
pub fn shapley_weight(m: usize, s: usize) -> f64 {
    let mut c = 1.0f64;
    for k in 0..s {
        c = c * (m - 1 - k) as f64 / (k + 1) as f64;
    }
    1.0 / (m as f64 * c.round())
}

/// Attribution from a complete table of coalition values indexed by mask
/// bits. `table.len()` must be `2^m`.
pub fn shapley_from_table(table: &[f64], m: usize) -> Result<ShapAttribution> {
    if m > MAX_FEATURES {
        return Err(Error::Rejected(format!("{m} features exceed the enumeration limit {MAX_FEATURES}")));
    }
    if table.len() != 1 << m {
        return Err(Error::Contract(format!("value table has {} entries, expected {}", table.len(), 1usize << m)));
    }
    let weights: Vec<f64> = (0..m.max(1)).map(|s| shapley_weight(m, s)).collect();
    let phi = (0..m)
        .map(|i| {
            let bit = 1usize << i;
            (0..table.len())
                .filter(|s| s & bit == 0)
                .map(|s| weights[s.count_ones() as usize] * (table[s | bit] - table[s]))
                .sum()
        })
        .collect();
    Ok(ShapAttribution {
        phi0: table[0],
        phi,
        fx: table[table.len() - 1],
    })
}

/// Exact Shapley values over `m` features. `value_fn` is called exactly
/// once per coalition, `2^m` times in total, in increasing mask order.
pub fn shapley_exact<F>(m: usize, mut value_fn: F) -> Result<ShapAttribution>
where
    F: FnMut(CoalitionMask) -> Result<f64>,
{
    if m > MAX_FEATURES {
        return Err(Error::Rejected(format!("{m} features exceed the enumeration limit {MAX_FEATURES}")));
    }
    let table = (0..1u32 << m)
        .map(|bits| value_fn(CoalitionMask { bits, m }))
        .collect::<Result<Vec<f64>>>()?;
    shapley_from_table(&table, m)
}
