//! Sequential vs rayon execution of the heavy stages.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use rcook_core::linalg;
use rcook_core::pipeline::{self, DetectorConfig};
use rcook_core::rff;
use rcook_core::synth::{self, Pervasive, SceneSpec, Scene};
use rcook_core::tune::{self, GridSpec};
use rcook_core::Execution;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn scene(rows: usize, cols: usize) -> Scene {
    synth::generate(&SceneSpec {
        rows,
        cols,
        bands: 8,
        pervasive: Pervasive::Quadratic,
        noise_sigma: 0.1,
        anomaly_fraction: 0.01,
        anomaly_strength: 1.5,
        seed: 1,
    })
    .unwrap()
}

fn design_stages(c: &mut Criterion) {
    let s = scene(200, 200);
    let map = rff::sample_map(8, 100, 2.0, 3).unwrap();
    let xd = rff::rff_design(&map, &s.x, Execution::Sequential).unwrap();
    let mut g = c.benchmark_group("stages");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::new("rff_design", name), |b| {
            b.iter(|| rff::rff_design(&map, &s.x, exec).unwrap())
        });
        g.bench_function(BenchmarkId::new("gram", name), |b| b.iter(|| linalg::gram(xd.view(), exec)));
    }
    g.finish();
}

fn detect(c: &mut Criterion) {
    let s = scene(200, 200);
    let plan = pipeline::experiment_split(s.x.n(), 10_000, 0.5, 1).unwrap();
    let cfg = DetectorConfig::rcook(2.0, 1e-3, 1);
    let mut g = c.benchmark_group("detect");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(name, |b| {
            b.iter(|| pipeline::detect(&s.x, &s.y, &cfg, &plan.train, exec).unwrap())
        });
    }
    g.finish();
}

fn cv_tune(c: &mut Criterion) {
    let s = scene(40, 50);
    let grid = GridSpec {
        sigma_grid: tune::log_grid(0.1, 10.0, 4).unwrap(),
        lambda_grid: tune::log_grid(1e-4, 1.0, 10).unwrap(),
        folds: 5,
        seed: 2,
    };
    let template = DetectorConfig::rcook(1.0, 0.0, 2);
    let mut g = c.benchmark_group("cv_tune");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(name, |b| {
            b.iter(|| tune::cv_tune(&s.x, &s.y, &s.truth, &grid, &template, exec).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, design_stages, detect, cv_tune);
criterion_main!(benches);
