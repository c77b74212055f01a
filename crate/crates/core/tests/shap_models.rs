use merge_saliency::features::Feature;
use merge_saliency::ingest::{align_to_grid, AlignedDemonstration};
use merge_saliency::lstm::train::{raw_window, train, TrainConfig};
use merge_saliency::shap::{
    explain_all, explain_all_retrain, explain_moment, retrain_subset_models, value_retrain, BackgroundSet,
    CoalitionMask, ExplainConfig, ValueSource,
};
use merge_saliency::synth::{generate_synthetic_dataset, SynthConfig};

fn data(n: usize, seed: u64) -> Vec<AlignedDemonstration> {
    let cfg = SynthConfig { n_demos: n, seed, ..Default::default() };
    generate_synthetic_dataset(&cfg).unwrap().iter().map(|d| align_to_grid(d, 11).unwrap()).collect()
}

fn small_cfg(inputs: Vec<Feature>) -> TrainConfig {
    TrainConfig { inputs, window: 4, hidden: 4, dense1: 4, dense2: 3, epochs: 3, batch_size: 16, seed: 5, ..Default::default() }
}

#[test]
fn window_equal_to_background_has_zero_attribution() {
    let demos = data(12, 1);
    let cfg = small_cfg(Feature::SIX_INPUTS.to_vec());
    let model = train(&demos, &cfg).unwrap();
    let window = raw_window(&demos[0], &cfg.inputs, cfg.window, 6);
    let bg = BackgroundSet { windows: vec![window] };
    let attr = explain_moment(&demos[0], 6, &ValueSource::Mask { model: &model, background: &bg }).unwrap();
    assert!(attr.phi.iter().all(|&p| p == 0.0));
    assert_eq!(attr.fx, attr.phi0);
}

#[test]
fn explain_all_shapes_and_local_accuracy() {
    let demos = data(10, 2);
    let cfg = small_cfg(Feature::SIX_INPUTS.to_vec());
    let model = train(&demos[..8], &cfg).unwrap();
    let grid: Vec<usize> = (0..11).collect();
    let t = explain_all(&model, &demos, &demos[..8], &grid, &ExplainConfig::default()).unwrap();
    assert_eq!(t.dims(), (10, 11, 6));
    assert_eq!(t.alphas[5], 50.0);
    for d in 0..10 {
        for a in 0..11 {
            let sum: f64 = (0..6).map(|i| t.phi_at(d, a, i)).sum();
            assert!((t.phi0[d * 11 + a] + sum - t.fx[d * 11 + a]).abs() < 1e-9);
            assert_eq!(t.fx[d * 11 + a], model.predict_at(&demos[d], a).unwrap());
        }
    }
    let sampled = explain_all(&model, &demos, &demos[..8], &grid, &ExplainConfig { background_k: 3, seed: 4 }).unwrap();
    assert_eq!(sampled.fx, t.fx);
    assert_ne!(sampled.phi, t.phi);
}

#[test]
fn retrain_family_structure() {
    let demos = data(8, 3);
    let cfg = small_cfg(vec![Feature::VxEgo, Feature::VyEgo, Feature::DxLead]);
    let models = retrain_subset_models(&demos, &cfg).unwrap();
    assert_eq!(models.models.len(), 8);
    assert!(models.models[0].is_none());
    assert_eq!(models.models.iter().filter(|m| m.is_some()).count(), 7);
    let only_vy = models.models[0b010].as_ref().unwrap();
    assert_eq!(only_vy.config.inputs, vec![Feature::VyEgo]);

    // the full subset reproduces the main model bit for bit
    let main = train(&demos, &cfg).unwrap();
    let full = models.models[7].as_ref().unwrap();
    assert_eq!(full.net, main.net);

    let empty = value_retrain(&models, &demos[0], 4, CoalitionMask::empty(3)).unwrap();
    let targets: Vec<f64> = demos.iter().flat_map(|d| d.series(Feature::DxEnd)).collect();
    assert!((empty - targets.iter().sum::<f64>() / targets.len() as f64).abs() < 1e-9);

    let t = explain_all_retrain(&models, &cfg.inputs, &demos[..2], &[0, 5, 10]).unwrap();
    assert_eq!(t.dims(), (2, 3, 3));
    assert_eq!(t.fx[1], main.predict_at(&demos[0], 5).unwrap());
}
