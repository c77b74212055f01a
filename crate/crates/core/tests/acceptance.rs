//! Acceptance suite. Each criterion prints one PASS/FAIL line; the test
//! fails if any criterion fails. The dataset-gated criterion runs only when
//! `MERGE_SALIENCY_DATASET_CONFIG` names a pipeline config for recorded data.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use common::{max_rel_error, permutation_shapley, random_game, LinearWindowModel};
use merge_saliency::config::PipelineConfig;
use merge_saliency::exec;
use merge_saliency::features::Feature;
use merge_saliency::ingest::{align_to_grid, read_aligned_csv, split_dataset, AlignedDemonstration};
use merge_saliency::lstm::train::{train, TrainConfig};
use merge_saliency::metrics::{aggregate, demo_metrics};
use merge_saliency::pipeline::{self, MetricsFile, Pipeline};
use merge_saliency::shap::{explain_all, explain_window, read_saliency_csv, saliency_summary, shapley_from_table, BackgroundSet, ExplainConfig};
use merge_saliency::synth::{generate_synthetic_dataset, SynthConfig};
use merge_saliency::uncertainty::{
    build_histogram, kl_divergence, mutual_information, mutual_information_from_joint, shared_edges, uncertainty_curves,
    SaliencyDistribution, UncertaintyConfig, DEFAULT_KL_EPS,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within_budget(start: Instant, budget: Duration) -> Result<(), String> {
    ensure(start.elapsed() < budget, || format!("took {:.1?}, budget {budget:?}", start.elapsed()))
}

fn gradient_correctness() -> Check {
    let start = Instant::now();
    let worst = (0..5).map(max_rel_error).fold(0.0f64, f64::max);
    ensure(worst < 1e-4, || format!("max relative error {worst:e} >= 1e-4"))?;
    within_budget(start, Duration::from_secs(60))?;
    Ok(format!("max relative error {worst:.2e} over 5 networks"))
}

fn shapley_axioms() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst_oracle = 0.0f64;
    for g in 0..50 {
        let m = 3 + g % 4;
        let v = random_game(&mut rng, m);
        let attr = shapley_from_table(&v, m).map_err(|e| e.to_string())?;
        ensure(attr.local_accuracy_error() < 1e-9, || format!("game {g}: efficiency error {}", attr.local_accuracy_error()))?;
        for (a, b) in attr.phi.iter().zip(permutation_shapley(&v, m)) {
            worst_oracle = worst_oracle.max((a - b).abs());
        }

        let d = rng.random_range(0..m);
        let mut dummy = v.clone();
        for s in 0..dummy.len() {
            if s >> d & 1 == 1 {
                dummy[s] = dummy[s & !(1 << d)];
            }
        }
        let phi_d = shapley_from_table(&dummy, m).unwrap().phi[d];
        ensure(phi_d == 0.0, || format!("game {g}: dummy feature got {phi_d}"))?;

        let mut sym = v.clone();
        for s in 0..sym.len() {
            let swapped = (s & !3) | (s & 1) << 1 | (s >> 1 & 1);
            if swapped < s {
                sym[s] = sym[swapped];
            }
        }
        let p = shapley_from_table(&sym, m).unwrap().phi;
        ensure((p[0] - p[1]).abs() < 1e-12, || format!("game {g}: symmetry gap {}", (p[0] - p[1]).abs()))?;

        let w = random_game(&mut rng, m);
        let (a, b) = (rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
        let mix: Vec<f64> = v.iter().zip(&w).map(|(x, y)| a * x + b * y).collect();
        let (pv, pw, pm) = (attr.phi, shapley_from_table(&w, m).unwrap().phi, shapley_from_table(&mix, m).unwrap().phi);
        for i in 0..m {
            let gap = (pm[i] - (a * pv[i] + b * pw[i])).abs();
            ensure(gap < 1e-12, || format!("game {g}: linearity gap {gap:e}"))?;
        }
    }
    ensure(worst_oracle < 1e-12, || format!("permutation oracle gap {worst_oracle:e}"))?;
    within_budget(start, Duration::from_secs(60))?;
    Ok(format!("50 games, max oracle gap {worst_oracle:.1e}"))
}

fn linear_closed_form() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let m = 6;
        let steps = 10;
        let n = m * steps;
        // depends on the last step only, so phi_i = w_i (x_i - mean_i)
        let mut weights = vec![0.0; n];
        for i in 0..m {
            weights[(steps - 1) * m + i] = rng.random_range(-3.0..3.0);
        }
        let model = LinearWindowModel { m, steps, weights, bias: rng.random_range(-5.0..5.0) };
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-30.0..30.0)).collect();
        let mean: Vec<f64> = (0..n).map(|_| rng.random_range(-30.0..30.0)).collect();
        let attr = explain_window(&model, &x, &BackgroundSet { windows: vec![mean.clone()] }).map_err(|e| e.to_string())?;
        for i in 0..m {
            let k = (steps - 1) * m + i;
            worst = worst.max((attr.phi[i] - model.weights[k] * (x[k] - mean[k])).abs());
        }
    }
    ensure(worst < 1e-9, || format!("max deviation {worst:e}"))?;
    Ok(format!("100 instances, max deviation {worst:.1e}"))
}

fn dist(probs: Vec<f64>) -> SaliencyDistribution {
    SaliencyDistribution { edges: (0..=probs.len()).map(|k| k as f64).collect(), probs, n_samples: 4, clamped: 0 }
}

fn entropy_estimators() -> Check {
    let kl = kl_divergence(&dist(vec![0.5, 0.5]), &dist(vec![0.25, 0.75])).map_err(|e| e.to_string())?;
    let want = 0.5 * 2f64.ln() + 0.5 * (2.0f64 / 3.0).ln();
    ensure((kl - want).abs() < 1e-12, || format!("KL fixture {kl} vs {want}"))?;
    ensure((kl - 0.14384).abs() < 1e-5, || format!("KL fixture {kl} vs 0.14384"))?;
    let kl1 = kl_divergence(&dist(vec![1.0, 0.0]), &dist(vec![0.5, 0.5])).unwrap();
    ensure((kl1 - 2f64.ln()).abs() < 1e-12, || format!("KL single-term fixture {kl1}"))?;

    let x = [0.25, 0.75, 1.25, 1.75];
    let mi = mutual_information(&x, &x, &[0.0, 1.0, 2.0], 0.0).map_err(|e| e.to_string())?;
    ensure((mi.value - 2f64.ln()).abs() < 1e-12, || format!("MI Y=X fixture {}", mi.value))?;
    let indep = mutual_information_from_joint(&[0.25; 4], 2, 2).unwrap().value;
    ensure(indep.abs() < 1e-12, || format!("MI independent fixture {indep}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = rng.random_range(2..200);
        let xs: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let ys: Vec<f64> = xs.iter().map(|v| v * rng.random_range(0.0..1.0) + rng.random_range(-1.0..1.0)).collect();
        let edges = shared_edges(xs.iter().chain(&ys), 10).unwrap();
        let mi = mutual_information(&xs, &ys, &edges, 1e-6).map_err(|e| e.to_string())?;
        worst = worst.max((mi.marginal_form() - mi.conditional_form()).abs());
    }
    ensure(worst < 1e-12, || format!("MI identity gap {worst:e}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(5000);
    let (p, q) = (Normal::new(0.0, 1.0).unwrap(), Normal::new(1.0, 1.0).unwrap());
    let a: Vec<f64> = (0..5000).map(|_| p.sample(&mut rng)).collect();
    let b: Vec<f64> = (0..5000).map(|_| q.sample(&mut rng)).collect();
    let edges = shared_edges(a.iter().chain(&b), UncertaintyConfig::default().kl_bins).unwrap();
    let g = kl_divergence(
        &build_histogram(&a, &edges, DEFAULT_KL_EPS).unwrap(),
        &build_histogram(&b, &edges, DEFAULT_KL_EPS).unwrap(),
    )
    .unwrap();
    ensure((g - 0.5).abs() < 0.05, || format!("Gaussian KL {g} not within 10% of 0.5"))?;
    Ok(format!("fixtures exact, identity gap {worst:.1e}, Gaussian KL {g:.4}"))
}

fn synth_split(seed: u64, resolution: usize) -> (Vec<AlignedDemonstration>, Vec<AlignedDemonstration>, Vec<AlignedDemonstration>) {
    let demos = generate_synthetic_dataset(&SynthConfig { seed, ..Default::default() }).unwrap();
    let aligned: Vec<_> = demos.iter().map(|d| align_to_grid(d, resolution).unwrap()).collect();
    let ids: Vec<u64> = aligned.iter().map(|d| d.demo_id).collect();
    let split = split_dataset(&ids, 0.8, seed).unwrap();
    let pick = |ids: &[u64]| aligned.iter().filter(|d| ids.contains(&d.demo_id)).cloned().collect::<Vec<_>>();
    let (tr, te) = (pick(&split.train), pick(&split.test));
    (aligned, tr, te)
}

fn trend_reproduction() -> Check {
    let start = Instant::now();
    let mut both = 0;
    let mut lines = Vec::new();
    for seed in 0..10 {
        let (all, tr, _) = synth_split(seed, 21);
        let model = train(&tr, &TrainConfig { epochs: 60, seed, ..Default::default() }).map_err(|e| e.to_string())?;
        let grid: Vec<usize> = (0..21).collect();
        let t = explain_all(&model, &all, &tr, &grid, &ExplainConfig::default()).map_err(|e| e.to_string())?;
        let set = uncertainty_curves(&t, &UncertaintyConfig::default()).map_err(|e| e.to_string())?;
        let (kl, mi) = (set.kl.trend.slope, set.mi.trend.slope);
        if kl < 0.0 && mi > 0.0 {
            both += 1;
        }
        lines.push(format!("{seed}:{kl:+.1e}/{mi:+.1e}"));
    }
    ensure(both >= 9, || format!("only {both}/10 seeds with KL slope < 0 and MI slope > 0 ({})", lines.join(" ")))?;
    within_budget(start, Duration::from_secs(600))?;
    Ok(format!("{both}/10 seeds, KL/MI slopes {} in {:.0?}", lines.join(" "), start.elapsed()))
}

fn training_sanity() -> Check {
    let start = Instant::now();
    let (_, tr, te) = synth_split(100, 21);
    let cfg = TrainConfig { seed: 100, ..Default::default() };
    let model = train(&tr, &cfg).map_err(|e| e.to_string())?;
    let per: Vec<_> = te
        .iter()
        .map(|d| demo_metrics(d.demo_id, &model.predict_series(d).unwrap(), &d.series(Feature::DxEnd)).unwrap())
        .collect();
    let agg = aggregate(&per).map_err(|e| e.to_string())?;
    ensure(agg.beta_bar >= 0.8, || format!("held-out beta_bar {:.4} < 0.8", agg.beta_bar))?;
    within_budget(start, Duration::from_secs(300))?;
    Ok(format!("held-out beta_bar {:.4}, RMSE {:.3} m in {:.0?}", agg.beta_bar, agg.rmse_bar, start.elapsed()))
}

const SMALL_RUN: &str = r#"
seed = 11
[data]
grid_resolution = 11
[synth]
n_demos = 24
[model]
epochs = 4
hidden = 8
dense1 = 8
dense2 = 4
"#;

fn determinism() -> Check {
    let cfg = PipelineConfig::from_toml(SMALL_RUN).map_err(|e| e.to_string())?;
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for (k, dir) in dirs.iter().enumerate() {
        // first run sequential, second on the parallel path
        exec::set_sequential(k == 0);
        let r = Pipeline::new(cfg.clone(), dir.path()).and_then(|mut p| p.run());
        exec::set_sequential(false);
        r.map_err(|e| e.to_string())?;
    }
    for name in [pipeline::METRICS, pipeline::SALIENCY, pipeline::CURVES_CSV] {
        let a = std::fs::read(dirs[0].path().join(name)).unwrap();
        let b = std::fs::read(dirs[1].path().join(name)).unwrap();
        ensure(a == b, || format!("{name} differs between runs"))?;
    }
    Ok("metrics.json, saliency.csv, curves.csv identical (sequential vs parallel)".into())
}

fn dataset_gated() -> Option<Check> {
    let path = std::env::var_os("MERGE_SALIENCY_DATASET_CONFIG")?;
    Some((|| {
        let cfg = PipelineConfig::load(std::path::Path::new(&path)).map_err(|e| e.to_string())?;
        let dir = tempfile::tempdir().unwrap();
        Pipeline::new(cfg, dir.path()).and_then(|mut p| p.run()).map_err(|e| e.to_string())?;
        let aligned = read_aligned_csv(std::fs::File::open(dir.path().join(pipeline::ALIGNED)).unwrap()).unwrap();
        let n = aligned.len() as f64;
        ensure((n - 796.0).abs() <= 79.6, || format!("{n} demonstrations, expected 796 +- 10%"))?;
        let metrics: MetricsFile = serde_json::from_slice(&std::fs::read(dir.path().join(pipeline::METRICS)).unwrap()).unwrap();
        ensure(metrics.aggregate.beta_bar >= 0.9, || format!("beta_bar {:.4} < 0.9", metrics.aggregate.beta_bar))?;
        let t = read_saliency_csv(std::fs::File::open(dir.path().join(pipeline::SALIENCY)).unwrap()).unwrap().remove(0);
        let mut s = saliency_summary(&t, t.nearest_alpha(0.0));
        s.sort_by(|a, b| b.mean_abs_phi.total_cmp(&a.mean_abs_phi));
        let mut top2 = [s[0].feature, s[1].feature];
        top2.sort();
        ensure(top2 == [Feature::VxEgo, Feature::VyEgo], || format!("top-2 at alpha 0%: {top2:?}"))?;
        Ok(format!("{n} demonstrations, beta_bar {:.4}, top-2 at 0%: vx_ego, vy_ego", metrics.aggregate.beta_bar))
    })())
}

fn run(id: &str, name: &str, f: impl FnOnce() -> Check) -> bool {
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        Err(e.downcast_ref::<String>().cloned().or(e.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
    });
    match outcome {
        Ok(detail) => {
            println!("PASS [{id}] {name}: {detail}");
            true
        }
        Err(why) => {
            println!("FAIL [{id}] {name}: {why}");
            false
        }
    }
}

#[test]
fn acceptance() {
    let mut ok = true;
    ok &= run("1", "gradient correctness", gradient_correctness);
    ok &= run("2", "Shapley axioms", shapley_axioms);
    ok &= run("3", "linear-model closed form", linear_closed_form);
    ok &= run("4", "entropy estimators", entropy_estimators);
    ok &= run("5", "trend reproduction", trend_reproduction);
    ok &= run("6", "training sanity", training_sanity);
    ok &= run("7", "determinism", determinism);
    match dataset_gated() {
        Some(r) => ok &= run("8", "recorded dataset", || r),
        None => println!("SKIP [8] recorded dataset: set MERGE_SALIENCY_DATASET_CONFIG to a pipeline config for the recorded data"),
    }
    assert!(ok, "acceptance criteria failed");
}
