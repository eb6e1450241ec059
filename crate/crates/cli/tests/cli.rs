use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ndarray::{array, Array1, Array2};
use rcook_core::raster::{self, Mask, PixelMatrix, ScoreMap};
use serde_json::Value;

fn rcook(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rcook"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn schema_check(name: &str, doc: &Value) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../schemas").join(name);
    let schema: Value = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
    let validator = jsonschema::validator_for(&schema).expect("schema compiles");
    let errors: Vec<String> = validator.iter_errors(doc).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{name}: {errors:?}\n{doc:#}");
}

struct Scene {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Scene {
    fn path(&self, name: &str) -> String {
        self.root.join(name).display().to_string()
    }

    fn synth(spec: &str) -> Scene {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        let scene = Scene { _dir: dir, root };
        fs::write(scene.path("spec.json"), spec).unwrap();
        let out = rcook(&[
            "synth",
            "--spec",
            &scene.path("spec.json"),
            "--out-x",
            &scene.path("x.ccmx"),
            "--out-y",
            &scene.path("y.ccmx"),
            "--out-truth",
            &scene.path("truth.pgm"),
        ]);
        schema_check("synth_report.schema.json", &stdout_json(&out));
        scene
    }
}

const LINEAR_SPEC: &str = r#"{"rows": 40, "cols": 50, "bands": 3, "pervasive": "linear",
    "noise_sigma": 0.0, "anomaly_fraction": 0.01, "anomaly_strength": 3.0, "seed": 5}"#;

#[test]
fn synth_writes_readable_files() {
    let s = Scene::synth(LINEAR_SPEC);
    let x = raster::load_matrix(s.path("x.ccmx")).unwrap();
    let y = raster::load_matrix(s.path("y.ccmx")).unwrap();
    let t = raster::load_mask(s.path("truth.pgm")).unwrap();
    assert_eq!((x.rows(), x.cols(), x.bands()), (40, 50, 3));
    assert_eq!(y.n(), 2000);
    assert_eq!(t.count_true(), 20);
}

#[test]
fn synth_one_percent_of_100x100() {
    let s = Scene::synth(
        r#"{"rows": 100, "cols": 100, "bands": 2, "pervasive": "sinusoid_mix",
            "noise_sigma": 0.1, "anomaly_fraction": 0.01, "anomaly_strength": 1.0, "seed": 1}"#,
    );
    assert_eq!(raster::load_mask(s.path("truth.pgm")).unwrap().count_true(), 100);
}

#[test]
fn synth_rejects_bad_spec() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("bad.json");
    fs::write(&spec, r#"{"rows": 0, "cols": 5}"#).unwrap();
    let p = |n: &str| dir.path().join(n).display().to_string();
    let out = rcook(&[
        "synth", "--spec", &p("bad.json"), "--out-x", &p("x"), "--out-y", &p("y"), "--out-truth", &p("t"),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let out = rcook(&[
        "synth", "--spec", &p("missing.json"), "--out-x", &p("x"), "--out-y", &p("y"), "--out-truth", &p("t"),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn detect_linear_scene_is_perfect() {
    let s = Scene::synth(LINEAR_SPEC);
    let out = rcook(&[
        "detect", "--x", &s.path("x.ccmx"), "--y", &s.path("y.ccmx"), "--truth", &s.path("truth.pgm"),
        "--method", "cook", "--seed", "3", "--out-scores", &s.path("scores.ccmx"),
        "--out-map", &s.path("map.pgm"), "--out-heatmap", &s.path("heat.pgm"), "--out-roc", &s.path("roc.csv"),
    ]);
    let report = stdout_json(&out);
    schema_check("detect_report.schema.json", &report);
    assert_eq!(report["auc_full"], 1.0);
    assert_eq!(report["auc_test"], 1.0);
    assert_eq!(report["auc_train"], 1.0);
    assert_eq!(report["n_train"], 1000);
    assert_eq!(report["D"], Value::Null);

    let map = raster::load_mask(s.path("map.pgm")).unwrap();
    let truth = raster::load_mask(s.path("truth.pgm")).unwrap();
    assert_eq!(map, truth);
    let scores = ScoreMap::from_matrix(raster::load_matrix(s.path("scores.ccmx")).unwrap()).unwrap();
    assert_eq!((scores.rows(), scores.cols()), (40, 50));
    assert!(fs::read_to_string(s.path("roc.csv")).unwrap().ends_with("# auc=1\n"));
}

#[test]
fn detect_without_truth_scores_only() {
    let s = Scene::synth(LINEAR_SPEC);
    let out = rcook(&[
        "detect", "--x", &s.path("x.ccmx"), "--y", &s.path("y.ccmx"), "--method", "rcook", "--sigma", "2",
        "--lambda", "0.01", "--D", "20", "--seed", "3", "--threshold", "1.5", "--out-map", &s.path("m.pgm"),
    ]);
    let report = stdout_json(&out);
    schema_check("detect_report.schema.json", &report);
    assert!(report.get("auc_full").is_none());
    assert_eq!(report["p"], 41);
    assert_eq!(report["threshold"], 1.5);
    assert!(Path::new(&s.path("m.pgm")).exists());
}

#[test]
fn detect_argument_errors() {
    let s = Scene::synth(LINEAR_SPEC);
    let base = ["detect", "--x", &s.path("x.ccmx"), "--y", &s.path("y.ccmx")];

    let out = rcook(&[&base[..], &["--method", "rcook", "--seed", "1"]].concat());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--sigma"));

    let out = rcook(&[&base[..], &["--method", "cook"]].concat());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--seed"));

    let out = rcook(&[&base[..], &["--method", "cook", "--seed", "1", "--threshold", "auto"]].concat());
    assert_eq!(out.status.code(), Some(1));

    let out = rcook(&[&base[..], &["--method", "cook", "--seed", "1", "--lambda", "-2"]].concat());
    assert_eq!(out.status.code(), Some(1));

    let out = rcook(&[
        "detect", "--x", &s.path("nope.ccmx"), "--y", &s.path("y.ccmx"), "--method", "cook", "--seed", "1",
    ]);
    assert_eq!(out.status.code(), Some(2));

    fs::write(s.path("garbage.ccmx"), b"definitely not a matrix file at all").unwrap();
    let out = rcook(&[
        "detect", "--x", &s.path("garbage.ccmx"), "--y", &s.path("y.ccmx"), "--method", "cook", "--seed", "1",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("magic"));
}

#[test]
fn tune_single_point_grid() {
    let s = Scene::synth(LINEAR_SPEC);
    fs::write(s.path("grid.json"), r#"{"sigma_grid": [3.0], "lambda_grid": [0.1]}"#).unwrap();
    let out = rcook(&[
        "tune", "--x", &s.path("x.ccmx"), "--y", &s.path("y.ccmx"), "--truth", &s.path("truth.pgm"),
        "--method", "rcook", "--grid", &s.path("grid.json"), "--D", "10", "--folds", "2", "--seed", "4",
        "--out", &s.path("tune.json"), "--out-csv", &s.path("tune.csv"),
    ]);
    let report = stdout_json(&out);
    schema_check("tune_report.schema.json", &report);
    assert_eq!(report["best_sigma"], 3.0);
    assert_eq!(report["best_lambda"], 0.1);
    assert_eq!(report["grid_points"], 1);
    let doc: Value = serde_json::from_str(&fs::read_to_string(s.path("tune.json")).unwrap()).unwrap();
    schema_check("tune_result.schema.json", &doc);
    let csv = fs::read_to_string(s.path("tune.csv")).unwrap();
    assert!(csv.starts_with("sigma,lambda,mean_auc\n3,0.1,"));
}

#[test]
fn tune_default_grid_is_50_by_50() {
    let s = Scene::synth(
        r#"{"rows": 30, "cols": 30, "bands": 2, "pervasive": "quadratic",
            "noise_sigma": 0.05, "anomaly_fraction": 0.05, "anomaly_strength": 2.0, "seed": 8}"#,
    );
    let out = rcook(&[
        "tune", "--x", &s.path("x.ccmx"), "--y", &s.path("y.ccmx"), "--truth", &s.path("truth.pgm"),
        "--method", "rcook", "--grid-default", "--D", "5", "--folds", "2", "--seed", "4",
        "--n-samples", "300", "--out", &s.path("tune.json"),
    ]);
    let report = stdout_json(&out);
    assert_eq!(report["grid_points"], 2500);
    let doc: Value = serde_json::from_str(&fs::read_to_string(s.path("tune.json")).unwrap()).unwrap();
    assert_eq!(doc["table"].as_array().unwrap().len(), 2500);
}

#[test]
fn tune_separable_scene_reaches_one() {
    let s = Scene::synth(LINEAR_SPEC);
    fs::write(s.path("grid.json"), r#"{"lambda_grid": [1e-6, 1.0]}"#).unwrap();
    let out = rcook(&[
        "tune", "--x", &s.path("x.ccmx"), "--y", &s.path("y.ccmx"), "--truth", &s.path("truth.pgm"),
        "--method", "cook", "--grid", &s.path("grid.json"), "--seed", "2", "--out", &s.path("t.json"),
    ]);
    let report = stdout_json(&out);
    assert_eq!(report["cv_auc"], 1.0);
    assert_eq!(report["best_sigma"], Value::Null);
}

#[test]
fn tune_requires_a_grid_choice() {
    let s = Scene::synth(LINEAR_SPEC);
    let out = rcook(&[
        "tune", "--x", &s.path("x.ccmx"), "--y", &s.path("y.ccmx"), "--truth", &s.path("truth.pgm"),
        "--method", "cook", "--seed", "2", "--out", &s.path("t.json"),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

fn write_scores(dir: &Path, scores: &[f64], truth: &[bool]) -> (String, String) {
    let n = scores.len();
    let s = ScoreMap::new(Array1::from(scores.to_vec()), 1, n).unwrap();
    let t = Mask::new(truth.to_vec(), 1, n).unwrap();
    let sp = dir.join("s.ccmx");
    let tp = dir.join("t.pgm");
    raster::save_matrix(&s.to_matrix(), &sp).unwrap();
    raster::save_mask(&t, &tp).unwrap();
    (sp.display().to_string(), tp.display().to_string())
}

#[test]
fn eval_cases() {
    let dir = tempfile::tempdir().unwrap();
    let roc = dir.path().join("roc.csv").display().to_string();
    let cases: [(&[f64], &[bool], f64); 3] = [
        (&[0.9, 0.1, 0.8, 0.2], &[true, false, true, false], 1.0),
        (&[0.3, 0.3, 0.3, 0.3], &[true, false, true, false], 0.5),
        (&[0.9, 0.8, 0.7, 0.6], &[true, false, true, false], 0.75),
    ];
    for (scores, truth, auc) in cases {
        let (s, t) = write_scores(dir.path(), scores, truth);
        let report = stdout_json(&rcook(&["eval", "--scores", &s, "--truth", &t, "--out-roc", &roc]));
        schema_check("eval_report.schema.json", &report);
        assert_eq!(report["auc"], auc);
        let csv = fs::read_to_string(&roc).unwrap();
        assert!(csv.ends_with(&format!("# auc={auc}\n")));

        let other = dir.path().join("roc2.csv");
        let out = rcook(&["roc-export", "--scores", &s, "--truth", &t, "--out-roc", other.to_str().unwrap()]);
        assert!(out.status.success());
        assert!(out.stdout.is_empty());
        assert_eq!(fs::read_to_string(&other).unwrap(), csv);
    }
}

#[test]
fn eval_rejects_single_class_truth() {
    let dir = tempfile::tempdir().unwrap();
    let (s, t) = write_scores(dir.path(), &[0.1, 0.2], &[true, true]);
    let out = rcook(&["eval", "--scores", &s, "--truth", &t]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("degenerate"));
}

#[test]
fn detect_reads_sidecar_shaped_matrices() {
    let dir = tempfile::tempdir().unwrap();
    let x = Array2::from_shape_fn((60, 2), |(i, j)| ((i * 3 + j * 7) % 13) as f64 + 0.1 * i as f64);
    let y = x.dot(&array![[1.0, 0.5], [-0.5, 2.0]]);
    let xp = dir.path().join("x.ccmx");
    let yp = dir.path().join("y.ccmx");
    raster::save_matrix(&PixelMatrix::from_samples(x).unwrap(), &xp).unwrap();
    raster::save_matrix(&PixelMatrix::from_samples(y).unwrap(), &yp).unwrap();
    for p in [&xp, &yp] {
        let mut side = p.as_os_str().to_owned();
        side.push(".shape.json");
        fs::write(side, r#"{"rows": 6, "cols": 10}"#).unwrap();
    }
    let sp = dir.path().join("s.ccmx");
    let out = rcook(&[
        "detect", "--x", xp.to_str().unwrap(), "--y", yp.to_str().unwrap(), "--method", "cook",
        "--seed", "0", "--out-scores", sp.to_str().unwrap(),
    ]);
    stdout_json(&out);
    let scores = raster::load_matrix(&sp).unwrap();
    assert_eq!((scores.rows(), scores.cols()), (6, 10));
}
