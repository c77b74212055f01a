use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use merge_saliency::config::PipelineConfig;
use merge_saliency::pipeline::{self, report, Pipeline, Stage};
use merge_saliency::Error;

const SMALL: &str = r#"
seed = 5
[data]
grid_resolution = 11
[synth]
n_demos = 20
[model]
epochs = 3
hidden = 6
dense1 = 6
dense2 = 4
"#;

fn run_small(dir: &Path) -> Pipeline {
    let mut p = Pipeline::new(PipelineConfig::from_toml(SMALL).unwrap(), dir).unwrap();
    p.run().unwrap();
    p
}

#[test]
fn synth_run_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    run_small(dir.path());
    for name in [
        pipeline::CONFIG,
        pipeline::MANIFEST,
        pipeline::ALIGNED,
        pipeline::SPLIT,
        pipeline::TRUTH,
        pipeline::MODEL,
        pipeline::METRICS,
        pipeline::SALIENCY,
        pipeline::SUMMARY,
        pipeline::CURVES_CSV,
        pipeline::CURVES_JSON,
        pipeline::REPORT,
    ] {
        assert!(dir.path().join(name).is_file(), "missing {name}");
    }
    let text = fs::read_to_string(dir.path().join(pipeline::REPORT)).unwrap();
    for key in ["alpha = 0%", "alpha = 50%", "alpha = 100%", "KL slope negative: ", "MI slope positive: ", "seed = 5"] {
        assert!(text.contains(key), "report lacks `{key}`:\n{text}");
    }
    let curves = fs::read_to_string(dir.path().join(pipeline::CURVES_CSV)).unwrap();
    assert!(curves.starts_with("kind,alpha_mid,value_nats,feature,trend_value,band\n"));
    // 10 adjacent pairs, KL and MI, aggregate plus six features
    assert_eq!(curves.lines().count(), 1 + 10 * 2 * 7);
}

#[test]
fn deleted_artifact_is_reproduced_bit_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let mut p = run_small(dir.path());
    for name in [pipeline::MODEL, pipeline::SALIENCY, pipeline::CURVES_CSV] {
        let before = fs::read(dir.path().join(name)).unwrap();
        fs::remove_file(dir.path().join(name)).unwrap();
        p.run().unwrap();
        assert_eq!(fs::read(dir.path().join(name)).unwrap(), before, "{name}");
    }
}

#[test]
fn current_stages_are_skipped() {
    let dir = tempfile::tempdir().unwrap();
    let mut p = run_small(dir.path());
    let model = dir.path().join(pipeline::MODEL);
    let stamp = fs::metadata(&model).unwrap().modified().unwrap();
    std::thread::sleep(std::time::Duration::from_millis(20));
    p.run_stage(Stage::Train).unwrap();
    assert_eq!(fs::metadata(&model).unwrap().modified().unwrap(), stamp);
    p.force = true;
    p.run_stage(Stage::Train).unwrap();
    assert_ne!(fs::metadata(&model).unwrap().modified().unwrap(), stamp);
}

#[test]
fn changed_config_invalidates_cache() {
    let dir = tempfile::tempdir().unwrap();
    run_small(dir.path());
    let before = fs::read(dir.path().join(pipeline::MODEL)).unwrap();
    let mut cfg = PipelineConfig::from_toml(SMALL).unwrap();
    cfg.model.epochs = 4;
    Pipeline::new(cfg, dir.path()).unwrap().run_stage(Stage::Train).unwrap();
    assert_ne!(fs::read(dir.path().join(pipeline::MODEL)).unwrap(), before);
}

#[test]
fn missing_upstream_names_the_file_and_stage() {
    let dir = tempfile::tempdir().unwrap();
    let mut p = Pipeline::new(PipelineConfig::from_toml(SMALL).unwrap(), dir.path()).unwrap();
    let err = p.run_stage(Stage::Train).unwrap_err();
    assert!(matches!(&err, Error::Stage { stage, source } if stage == "train" && matches!(**source, Error::MissingArtifact(_))));
    assert!(err.to_string().contains("aligned.csv"), "{err}");
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn report_on_empty_directory_is_missing_file_error() {
    let dir = tempfile::tempdir().unwrap();
    let err = report(dir.path()).unwrap_err();
    assert!(matches!(err, Error::MissingArtifact(ref p) if p.ends_with(pipeline::CONFIG)));
}

#[test]
fn unknown_feature_aborts_before_compute() {
    let err = PipelineConfig::from_toml("seed = 1\n[model]\noutput = \"dx_finish\"").unwrap_err();
    assert!(err.to_string().contains("dx_finish"));
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn retrain_cross_check_adds_second_variant() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("{SMALL}\n[shap]\nretrain_check = true\nretrain_epochs = 1\n");
    let mut cfg = PipelineConfig::from_toml(&text).unwrap();
    cfg.model.inputs = vec!["vx_ego".into(), "vy_ego".into(), "dx_lead".into()];
    Pipeline::new(cfg, dir.path()).unwrap().run().unwrap();
    let csv = fs::read_to_string(dir.path().join(pipeline::SALIENCY)).unwrap();
    assert!(csv.lines().any(|l| l.ends_with(",mask")));
    assert!(csv.lines().any(|l| l.ends_with(",retrain")));
}

/// Ramp vehicles drive along y < 0 and cut across y = 0; one highway
/// vehicle per ramp vehicle drives ahead in the target lane.
fn write_tracks(path: &Path, n: usize) {
    let mut s = String::from("track_id,frame_id,timestamp_ms,agent_type,x,y,vx,vy,psi_rad,length,width\n");
    for i in 0..n {
        let t0 = 1000 * i as i64;
        let frames = 25 + i % 7;
        for k in 0..frames {
            let t = t0 + 100 * k as i64;
            let x = 20.0 + 1.1 * k as f64;
            let y = -3.0 + 4.0 * k as f64 / (frames - 4) as f64;
            let _ = writeln!(s, "{},{},{t},car,{x},{y},11,0.4,0.03,4.5,1.8", 2 * i + 1, t / 100);
            let _ = writeln!(s, "{},{},{t},truck,{},{},12,0,0,10,2.5", 2 * i + 2, t / 100, x + 8.0 + i as f64, 1.75);
        }
    }
    fs::write(path, s).unwrap();
}

#[test]
fn recorded_csv_source_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    write_tracks(&dir.path().join("tracks.csv"), 12);
    fs::write(
        dir.path().join("scene.toml"),
        "lane_boundary = [[0.0, 0.0], [200.0, 0.0]]\nramp_end = [180.0, -3.0]\nroi = { min = [0.0, -10.0], max = [200.0, 10.0] }\ngrid_resolution = 11\n",
    )
    .unwrap();
    fs::write(
        dir.path().join("run.toml"),
        "seed = 2\n[data]\nsource = \"csv\"\ntracks = \"tracks.csv\"\nscene = \"scene.toml\"\n[model]\nepochs = 2\nhidden = 4\ndense1 = 4\ndense2 = 4\n",
    )
    .unwrap();
    let cfg = PipelineConfig::load(&dir.path().join("run.toml")).unwrap();
    let out = dir.path().join("out");
    Pipeline::new(cfg, &out).unwrap().run().unwrap();
    let aligned = fs::read_to_string(out.join(pipeline::ALIGNED)).unwrap();
    assert_eq!(aligned.lines().count(), 1 + 12 * 11);
    assert!(!out.join(pipeline::TRUTH).exists());
}
