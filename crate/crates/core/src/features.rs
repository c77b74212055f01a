//! The eight merge decision features and their per-frame container.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

pub const N_FEATURES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feature {
    /// Longitudinal gap to the lead vehicle (lead minus ego), m.
    DxLead,
    /// Longitudinal speed difference to the lead vehicle, m/s.
    DvLead,
    /// Ego longitudinal speed, m/s.
    VxEgo,
    /// Ego lateral speed, positive toward the highway, m/s.
    VyEgo,
    /// Longitudinal gap to the lag vehicle (lag minus ego), m.
    DxLag,
    /// Longitudinal speed difference to the lag vehicle, m/s.
    DvLag,
    /// Distance along the lane to the end of the ramp, m.
    DxEnd,
    /// Signed lateral distance to the lane boundary, ramp side positive, m.
    DyBdry,
}

impl Feature {
    pub const ALL: [Feature; N_FEATURES] = [
        Feature::DxLead,
        Feature::DvLead,
        Feature::VxEgo,
        Feature::VyEgo,
        Feature::DxLag,
        Feature::DvLag,
        Feature::DxEnd,
        Feature::DyBdry,
    ];

    /// The six inputs used to predict `dx_end`.
    pub const SIX_INPUTS: [Feature; 6] = [
        Feature::DxLead,
        Feature::DvLead,
        Feature::VxEgo,
        Feature::VyEgo,
        Feature::DxLag,
        Feature::DvLag,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Feature::DxLead => "dx_lead",
            Feature::DvLead => "dv_lead",
            Feature::VxEgo => "vx_ego",
            Feature::VyEgo => "vy_ego",
            Feature::DxLag => "dx_lag",
            Feature::DvLag => "dv_lag",
            Feature::DxEnd => "dx_end",
            Feature::DyBdry => "dy_bdry",
        }
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Feature {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Feature::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown feature name `{s}`")))
    }
}

/// One frame's worth of decision features, indexed by [`Feature`].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FeatureVector(pub [f64; N_FEATURES]);

impl FeatureVector {
    pub fn get(&self, f: Feature) -> f64 {
        self.0[f.index()]
    }

    pub fn set(&mut self, f: Feature, v: f64) {
        self.0[f.index()] = v;
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn lerp(&self, other: &FeatureVector, w: f64) -> FeatureVector {
        let mut out = [0.0; N_FEATURES];
        for (k, o) in out.iter_mut().enumerate() {
            *o = self.0[k] + w * (other.0[k] - self.0[k]);
        }
        FeatureVector(out)
    }
}
