//! JSON model artifact. Floats are written in shortest round-trip form and
//! parsed with exact rounding, so weights survive a round trip bit for bit.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::train::TrainedModel;
use crate::error::{Error, Result};

pub const FORMAT: &str = "merge-saliency/lstm-v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Artifact {
    format: String,
    dims: super::Dims,
    seed: u64,
    #[serde(flatten)]
    model: TrainedModel,
}

pub fn to_json(model: &TrainedModel) -> Result<String> {
    let art = Artifact {
        format: FORMAT.into(),
        dims: model.net.dims(),
        seed: model.config.seed,
        model: model.clone(),
    };
    serde_json::to_string_pretty(&art).map_err(|e| Error::Integrity(format!("serializing model: {e}")))
}

pub fn from_json(text: &str) -> Result<TrainedModel> {
    let art: Artifact =
        serde_json::from_str(text).map_err(|e| Error::Parse { row: e.line(), msg: format!("model artifact: {e}") })?;
    if art.format != FORMAT {
        return Err(Error::Integrity(format!("unsupported model format `{}`", art.format)));
    }
    art.model.net.weights.check_dims(art.dims)?;
    Ok(art.model)
}

pub fn save(model: &TrainedModel, path: &Path) -> Result<()> {
    std::fs::write(path, to_json(model)?).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<TrainedModel> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lstm::{NetworkParams, NormStats, TrainConfig, Weights};
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn round_trip_is_bit_exact(seed in any::<u64>(), scale in 1e-300f64..1e300) {
            let cfg = TrainConfig { hidden: 3, dense1: 2, dense2: 2, seed, ..Default::default() };
            let mut w = Weights::init(cfg.dims(), &mut crate::rng::from_seed(seed));
            let flat: Vec<f64> = w.flatten().iter().map(|v| v * scale).collect();
            w.set_flat(&flat);
            let mut norm = NormStats::identity(6);
            norm.input_std[2] = 1.0 / 3.0;
            norm.target_mean = -0.1;
            let model = TrainedModel {
                net: NetworkParams::new(w, norm).unwrap(),
                config: cfg,
                loss_history: vec![0.1, 1.0 / 7.0],
            };
            let back = from_json(&to_json(&model).unwrap()).unwrap();
            let bits = |m: &TrainedModel| m.net.weights.flatten().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            prop_assert_eq!(bits(&back), bits(&model));
            prop_assert_eq!(back, model);
        }
    }

    #[test]
    fn rejects_foreign_format() {
        assert!(from_json("{\"format\":\"other\"}").is_err());
    }
}
