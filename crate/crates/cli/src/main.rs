//! `rcook`: chronochrome anomalous change detection from the command line.
//!
//! Exit codes: 0 success, 1 invalid input or arguments, 2 I/O failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use serde_json::{json, Value};

use rcook_core::cook::CookVariant;
use rcook_core::pipeline::{
    self, DetectorConfig, Method, DEFAULT_FEATURES, DEFAULT_SAMPLES, DEFAULT_TRAIN_FRACTION,
};
use rcook_core::raster::{self, Mask, ScoreMap};
use rcook_core::synth::{self, SceneSpec};
use rcook_core::tune::{self, GridSpec, DEFAULT_FOLDS};
use rcook_core::{eval, Error, Execution};

/// Version of the JSON documents printed on stdout.
const REPORT_VERSION: u32 = 1;

#[derive(Parser)]
#[command(name = "rcook", version, about = "Anomalous change detection with linear and randomized Cook's distance")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic bi-temporal scene with planted anomalies.
    Synth(SynthArgs),
    /// Fit the chronochrome regressor and score every pixel.
    Detect(DetectArgs),
    /// Cross-validated grid search over sigma and lambda.
    Tune(TuneArgs),
    /// ROC analysis of a score map against ground truth.
    Eval(EvalArgs),
    /// Write the ROC curve of a score map as CSV.
    RocExport(RocExportArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    out_x: PathBuf,
    #[arg(long)]
    out_y: PathBuf,
    #[arg(long)]
    out_truth: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Cook,
    Rcook,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Cook => Method::Cook,
            MethodArg::Rcook => Method::RCook,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Classical,
    PaperLiteral,
}

impl From<VariantArg> for CookVariant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Classical => CookVariant::Classical,
            VariantArg::PaperLiteral => CookVariant::PaperLiteral,
        }
    }
}

/// Detector and sampling flags shared by `detect` and `tune`.
#[derive(Args)]
struct ModelArgs {
    #[arg(long)]
    x: PathBuf,
    #[arg(long)]
    y: PathBuf,
    #[arg(long, value_enum)]
    method: MethodArg,
    #[arg(long, value_enum, default_value = "classical")]
    variant: VariantArg,
    #[arg(long = "D", default_value_t = DEFAULT_FEATURES)]
    n_features: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_TRAIN_FRACTION)]
    train_frac: f64,
    /// Pixels sampled for the train/test protocol (capped at the image size).
    #[arg(long, default_value_t = DEFAULT_SAMPLES)]
    n_samples: usize,
    /// Skip per-band standardization.
    #[arg(long)]
    no_standardize: bool,
}

#[derive(Args)]
struct DetectArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    lambda: f64,
    /// Score map in matrix format (one band).
    #[arg(long)]
    out_scores: Option<PathBuf>,
    /// Thresholded anomaly map (PGM).
    #[arg(long)]
    out_map: Option<PathBuf>,
    /// Min-max scaled score image (PGM).
    #[arg(long)]
    out_heatmap: Option<PathBuf>,
    /// Full-image ROC curve (CSV); requires --truth.
    #[arg(long)]
    out_roc: Option<PathBuf>,
    /// `auto` (nearest-to-(0,1) ROC vertex, requires --truth) or a number.
    #[arg(long)]
    threshold: Option<String>,
}

#[derive(Args)]
struct TuneArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    truth: PathBuf,
    /// 50 log-spaced points on [1e-5, 1e4] for sigma and lambda.
    #[arg(long, conflicts_with = "grid")]
    grid_default: bool,
    /// JSON file with `sigma_grid` and `lambda_grid` arrays.
    #[arg(long)]
    grid: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_FOLDS)]
    folds: usize,
    /// Tune result (JSON).
    #[arg(long)]
    out: PathBuf,
    /// Grid table (CSV: sigma,lambda,mean_auc).
    #[arg(long)]
    out_csv: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    scores: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    #[arg(long)]
    out_roc: Option<PathBuf>,
}

#[derive(Args)]
struct RocExportArgs {
    #[arg(long)]
    scores: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    #[arg(long)]
    out_roc: PathBuf,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Core(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_io() => 2,
            _ => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => f.write_str(m),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn usage<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Usage(msg.into()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Synth(a) => run_synth(a),
        Command::Detect(a) => run_detect(a),
        Command::Tune(a) => run_tune(a),
        Command::Eval(a) => run_eval(a),
        Command::RocExport(a) => run_roc_export(a),
    };
    match result {
        Ok(report) => {
            if let Some(v) = report {
                println!("{}", serde_json::to_string_pretty(&v).expect("report serializes"));
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn read_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| {
        CliError::Core(Error::Io {
            path: path.display().to_string(),
            source: e,
        })
    })
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| {
        CliError::Core(Error::Io {
            path: path.display().to_string(),
            source: e,
        })
    })
}

fn run_synth(a: SynthArgs) -> CliResult<Option<Value>> {
    let spec = SceneSpec::from_json(&read_text(&a.spec)?)?;
    let scene = synth::generate(&spec)?;
    raster::save_matrix(&scene.x, &a.out_x)?;
    raster::save_matrix(&scene.y, &a.out_y)?;
    raster::save_mask(&scene.truth, &a.out_truth)?;
    Ok(Some(json!({
        "report_version": REPORT_VERSION,
        "command": "synth",
        "rows": spec.rows,
        "cols": spec.cols,
        "bands": spec.bands,
        "anomalous_pixels": scene.truth.count_true(),
    })))
}

struct Inputs {
    x: raster::PixelMatrix,
    y: raster::PixelMatrix,
    truth: Option<Mask>,
}

fn load_inputs(m: &ModelArgs, truth: Option<&Path>) -> CliResult<Inputs> {
    let x = raster::load_matrix(&m.x)?;
    let y = raster::load_matrix(&m.y)?;
    if x.n() != y.n() || (x.rows(), x.cols()) != (y.rows(), y.cols()) {
        return usage(format!(
            "--x is {}x{} but --y is {}x{}",
            x.rows(),
            x.cols(),
            y.rows(),
            y.cols()
        ));
    }
    let truth = match truth {
        Some(p) => {
            let t = raster::load_mask(p)?;
            if (t.rows(), t.cols()) != (x.rows(), x.cols()) {
                return usage(format!(
                    "--truth is {}x{} but the images are {}x{}",
                    t.rows(),
                    t.cols(),
                    x.rows(),
                    x.cols()
                ));
            }
            Some(t)
        }
        None => None,
    };
    Ok(Inputs { x, y, truth })
}

fn template(m: &ModelArgs, sigma: Option<f64>, lambda: f64) -> DetectorConfig {
    DetectorConfig {
        method: m.method.into(),
        variant: m.variant.into(),
        lambda,
        sigma,
        n_features: m.n_features,
        seed: m.seed,
        standardize: !m.no_standardize,
    }
}

fn n_samples(m: &ModelArgs, total: usize) -> usize {
    m.n_samples.min(total)
}

enum Threshold {
    Auto,
    Value(f64),
}

fn parse_threshold(s: &str) -> CliResult<Threshold> {
    if s == "auto" {
        return Ok(Threshold::Auto);
    }
    match s.parse::<f64>() {
        Ok(t) if !t.is_nan() => Ok(Threshold::Value(t)),
        _ => usage(format!("--threshold must be `auto` or a number, got {s:?}")),
    }
}

fn run_detect(a: DetectArgs) -> CliResult<Option<Value>> {
    let m = &a.model;
    if matches!(m.method, MethodArg::Rcook) && a.sigma.is_none() {
        return usage("--sigma is required with --method rcook");
    }
    let threshold = a.threshold.as_deref().map(parse_threshold).transpose()?;
    if a.truth.is_none() {
        if matches!(threshold, Some(Threshold::Auto)) {
            return usage("--threshold auto requires --truth");
        }
        if a.out_roc.is_some() {
            return usage("--out-roc requires --truth");
        }
        if a.out_map.is_some() && threshold.is_none() {
            return usage("--out-map without --truth requires a numeric --threshold");
        }
    }
    let cfg = template(m, a.sigma, a.lambda);
    cfg.validate()?;
    let inputs = load_inputs(m, a.truth.as_deref())?;
    let exec = Execution::default();
    let n = n_samples(m, inputs.x.n());

    let mut report = json!({
        "report_version": REPORT_VERSION,
        "command": "detect",
        "method": cfg.method,
        "variant": cfg.variant,
        "sigma": cfg.sigma,
        "lambda": cfg.lambda,
        "D": if cfg.method == Method::RCook { Some(cfg.n_features) } else { None },
        "seed": cfg.seed,
        "standardize": cfg.standardize,
        "n_pixels": inputs.x.n(),
    });

    let (detection, roc) = match &inputs.truth {
        Some(truth) => {
            let r = pipeline::run_experiment(&inputs.x, &inputs.y, truth, &cfg, n, m.train_frac, exec)?;
            report["n_train"] = json!(r.n_train);
            report["n_test"] = json!(r.n_test);
            report["auc_train"] = json!(r.train_auc);
            report["auc_test"] = json!(r.test_auc);
            report["auc_full"] = json!(r.full_auc);
            report["operating_point"] = json!(r.operating_point);
            (r.detection, r.full_roc)
        }
        None => {
            let plan = pipeline::experiment_split(inputs.x.n(), n, m.train_frac, cfg.seed)?;
            let d = pipeline::detect(&inputs.x, &inputs.y, &cfg, &plan.train, exec)?;
            report["n_train"] = json!(plan.train.len());
            report["n_test"] = json!(plan.test.len());
            (d, None)
        }
    };
    report["p"] = json!(detection.p);
    report["s2"] = json!(detection.s2);
    report["saturated_pixels"] = json!(detection.saturated.len());

    let threshold = match (threshold, a.out_map.is_some()) {
        (Some(t), _) => Some(t),
        (None, true) => Some(Threshold::Auto),
        (None, false) => None,
    };
    let t = match threshold {
        Some(Threshold::Auto) => {
            let roc = roc.as_ref().ok_or_else(|| {
                CliError::Usage("automatic threshold needs a ground truth with both classes".into())
            })?;
            Some(eval::best_operating_point(roc).threshold)
        }
        Some(Threshold::Value(t)) => Some(t),
        None => None,
    };
    let scores = &detection.scores;
    if let Some(t) = t {
        let map = eval::apply_threshold(scores, t);
        report["threshold"] = json!(t);
        report["anomalous_pixels"] = json!(map.count_true());
        if let Some(p) = &a.out_map {
            raster::save_mask(&map, p)?;
        }
    }
    if let Some(p) = &a.out_scores {
        raster::save_matrix(&scores.to_matrix(), p)?;
    }
    if let Some(p) = &a.out_heatmap {
        raster::save_heatmap(scores, p)?;
    }
    if let Some(p) = &a.out_roc {
        match &roc {
            Some(r) => eval::export_roc_csv(r, p)?,
            None => return usage("ground truth has a single class; no ROC curve"),
        }
    }
    Ok(Some(report))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GridFile {
    #[serde(default)]
    sigma_grid: Vec<f64>,
    lambda_grid: Vec<f64>,
}

fn run_tune(a: TuneArgs) -> CliResult<Option<Value>> {
    let m = &a.model;
    let grid = match (&a.grid, a.grid_default) {
        (Some(path), false) => {
            let g: GridFile = serde_json::from_str(&read_text(path)?).map_err(Error::from)?;
            GridSpec {
                sigma_grid: g.sigma_grid,
                lambda_grid: g.lambda_grid,
                folds: a.folds,
                seed: m.seed,
            }
        }
        (None, true) => GridSpec {
            folds: a.folds,
            ..GridSpec::default_grid(m.seed)
        },
        _ => return usage("exactly one of --grid-default or --grid <json> is required"),
    };
    let cfg = template(m, None, 0.0);
    grid.validate(cfg.method)?;
    let inputs = load_inputs(m, Some(&a.truth))?;
    let truth = inputs.truth.expect("truth was loaded");
    let n = n_samples(m, inputs.x.n());
    let plan = pipeline::experiment_split(inputs.x.n(), n, m.train_frac, m.seed)?;
    let result = tune::cv_tune(
        &inputs.x.select(&plan.train),
        &inputs.y.select(&plan.train),
        &truth.select(&plan.train),
        &grid,
        &cfg,
        Execution::default(),
    )?;
    write_text(&a.out, &result.to_json()?)?;
    if let Some(p) = &a.out_csv {
        result.export_csv(p)?;
    }
    Ok(Some(json!({
        "report_version": REPORT_VERSION,
        "command": "tune",
        "method": result.method,
        "best_sigma": result.best_sigma,
        "best_lambda": result.best_lambda,
        "cv_auc": result.cv_auc,
        "grid_points": result.table.len(),
        "folds": grid.folds,
        "n_train": plan.train.len(),
    })))
}

fn load_scores(scores: &Path, truth: &Path) -> CliResult<(ScoreMap, Mask)> {
    let s = ScoreMap::from_matrix(raster::load_matrix(scores)?)?;
    let t = raster::load_mask(truth)?;
    if s.len() != t.len() {
        return usage(format!("--scores has {} pixels but --truth has {}", s.len(), t.len()));
    }
    Ok((s, t))
}

fn run_eval(a: EvalArgs) -> CliResult<Option<Value>> {
    let (s, t) = load_scores(&a.scores, &a.truth)?;
    let roc = eval::roc(&s, &t)?;
    if let Some(p) = &a.out_roc {
        eval::export_roc_csv(&roc, p)?;
    }
    Ok(Some(json!({
        "report_version": REPORT_VERSION,
        "command": "eval",
        "n_pixels": s.len(),
        "positives": t.count_true(),
        "auc": roc.auc,
        "roc_vertices": roc.points.len(),
        "operating_point": eval::best_operating_point(&roc),
    })))
}

fn run_roc_export(a: RocExportArgs) -> CliResult<Option<Value>> {
    let (s, t) = load_scores(&a.scores, &a.truth)?;
    let roc = eval::roc(&s, &t)?;
    eval::export_roc_csv(&roc, &a.out_roc)?;
    Ok(None)
}
