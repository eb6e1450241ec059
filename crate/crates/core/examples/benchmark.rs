//! Tune and compare the linear and randomized Cook detectors on a scene
//! spec, following the sampled 50/50 protocol.
//!
//! cargo run --release -p rcook-core --example benchmark -- configs/benchmark_quadratic.json [seed]

use std::time::Instant;

use rcook_core::pipeline::{self, DetectorConfig, DEFAULT_SAMPLES, DEFAULT_TRAIN_FRACTION};
use rcook_core::synth::{self, SceneSpec};
use rcook_core::tune::{self, GridSpec};
use rcook_core::Execution;

fn main() -> rcook_core::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let path = args.get(1).map(String::as_str).unwrap_or("configs/benchmark_quadratic.json");
    let seed: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(7);
    let spec = SceneSpec::from_json(&std::fs::read_to_string(path).expect("readable spec"))?;
    let scene = synth::generate(&spec)?;
    let exec = Execution::default();
    let n = DEFAULT_SAMPLES.min(scene.x.n());
    let plan = pipeline::experiment_split(scene.x.n(), n, DEFAULT_TRAIN_FRACTION, seed)?;
    let (xt, yt, tt) = (
        scene.x.select(&plan.train),
        scene.y.select(&plan.train),
        scene.truth.select(&plan.train),
    );
    let grid = GridSpec::default_grid(seed);

    for template in [DetectorConfig::cook(0.0, seed), DetectorConfig::rcook(1.0, 0.0, seed)] {
        let t0 = Instant::now();
        let tuned = tune::cv_tune(&xt, &yt, &tt, &grid, &template, exec)?;
        let cfg = tuned.config(&template);
        let report = pipeline::run_experiment(&scene.x, &scene.y, &scene.truth, &cfg, n, DEFAULT_TRAIN_FRACTION, exec)?;
        println!(
            "{:?}: sigma={:?} lambda={:.3e} cv_auc={:.4} train={:.4} test={:.4} full={:.4} ({:.1}s)",
            cfg.method,
            cfg.sigma,
            cfg.lambda,
            tuned.cv_auc,
            report.train_auc.unwrap_or(f64::NAN),
            report.test_auc.unwrap_or(f64::NAN),
            report.full_auc.unwrap_or(f64::NAN),
            t0.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
