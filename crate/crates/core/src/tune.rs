//! Grid search over `(σ, λ)` by stratified k-fold cross-validation,
//! maximizing the mean held-out AUC.
//!
//! For a fixed fold and bandwidth the design, its Gram `G = QΛQᵀ` and the
//! projections of the held-out rows onto `Q` are computed once; each `λ` then
//! costs `O(n p d)`:
//!
//! ```text
//! W(λ)  = Q (Λ + λ)⁻¹ Qᵀ Xᵀ Y
//! h(λ)ᵢ = Σₖ (xᵢᵀ qₖ)² / (Λₖ + λ)
//! ```
//!
//! The residual variance is a per-fold constant factor in every held-out
//! score, so it is omitted from the fold AUC.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array1, Array2, Axis, Zip};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::cook::{CookVariant, LEVERAGE_CLAMP};
use crate::error::{Error, Result};
use crate::eval;
use crate::exec::Execution;
use crate::linalg::{self, SymmetricEigen};
use crate::pipeline::{self, DetectorConfig, Method};
use crate::raster::{write_file, Mask, PixelMatrix};
use crate::seed::{derive_seed, TAG_CV_RFF, TAG_FOLDS};

pub const DEFAULT_GRID_LO: f64 = 1e-5;
pub const DEFAULT_GRID_HI: f64 = 1e4;
pub const DEFAULT_GRID_POINTS: usize = 50;
pub const DEFAULT_FOLDS: usize = 5;

/// `k` points in geometric progression from `lo` to `hi`, endpoints exact.
pub fn log_grid(lo: f64, hi: f64, k: usize) -> Result<Vec<f64>> {
    if k < 2 {
        return Err(Error::invalid("grid size", format!("{k} < 2")));
    }
    if !(lo > 0.0 && hi > lo && hi.is_finite()) {
        return Err(Error::invalid("grid bounds", format!("need 0 < lo < hi, got [{lo}, {hi}]")));
    }
    let (a, b) = (lo.ln(), hi.ln());
    let step = (b - a) / (k - 1) as f64;
    let mut g: Vec<f64> = (0..k).map(|i| (a + step * i as f64).exp()).collect();
    g[0] = lo;
    g[k - 1] = hi;
    Ok(g)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub sigma_grid: Vec<f64>,
    pub lambda_grid: Vec<f64>,
    pub folds: usize,
    pub seed: u64,
}

impl GridSpec {
    /// 50 log-spaced points on `[1e-5, 1e4]` for both axes, 5 folds.
    pub fn default_grid(seed: u64) -> Self {
        let g = log_grid(DEFAULT_GRID_LO, DEFAULT_GRID_HI, DEFAULT_GRID_POINTS)
            .expect("default grid bounds are valid");
        GridSpec {
            sigma_grid: g.clone(),
            lambda_grid: g,
            folds: DEFAULT_FOLDS,
            seed,
        }
    }

    pub fn validate(&self, method: Method) -> Result<()> {
        if self.folds < 2 {
            return Err(Error::invalid("folds", format!("{} < 2", self.folds)));
        }
        if self.lambda_grid.is_empty() {
            return Err(Error::invalid("lambda_grid", "empty"));
        }
        if let Some(l) = self.lambda_grid.iter().find(|l| !(**l >= 0.0 && l.is_finite())) {
            return Err(Error::invalid("lambda_grid", format!("{l} must be finite and >= 0")));
        }
        if method == Method::RCook {
            if self.sigma_grid.is_empty() {
                return Err(Error::invalid("sigma_grid", "empty"));
            }
            if let Some(s) = self.sigma_grid.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
                return Err(Error::invalid("sigma_grid", format!("{s} must be positive")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridEntry {
    /// `None` for the linear detector, which has no bandwidth.
    pub sigma: Option<f64>,
    pub lambda: f64,
    pub mean_auc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub method: Method,
    pub best_sigma: Option<f64>,
    pub best_lambda: f64,
    pub cv_auc: f64,
    /// Sigma-major, lambda-minor.
    pub table: Vec<GridEntry>,
}

impl TuneResult {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("sigma,lambda,mean_auc\n");
        for e in &self.table {
            let sigma = e.sigma.map(|s| s.to_string()).unwrap_or_default();
            let _ = writeln!(out, "{sigma},{},{}", e.lambda, e.mean_auc);
        }
        out
    }

    pub fn export_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_file(path.as_ref(), self.to_csv().as_bytes())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Detector configuration at the selected grid point.
    pub fn config(&self, template: &DetectorConfig) -> DetectorConfig {
        DetectorConfig {
            method: self.method,
            lambda: self.best_lambda,
            sigma: self.best_sigma.or(template.sigma),
            ..template.clone()
        }
    }
}

/// Stratified fold assignment: positives and negatives are shuffled
/// separately and dealt round-robin. Returns the fold of every pixel.
pub fn stratified_folds(truth: &[bool], folds: usize, seed: u64) -> Result<Vec<usize>> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut pos: Vec<usize> = (0..truth.len()).filter(|&i| truth[i]).collect();
    let mut neg: Vec<usize> = (0..truth.len()).filter(|&i| !truth[i]).collect();
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);
    let mut fold_of = vec![0; truth.len()];
    for (k, &i) in pos.iter().enumerate() {
        fold_of[i] = k % folds;
    }
    // continue dealing where positives stopped so fold sizes stay balanced
    for (k, &i) in neg.iter().enumerate() {
        fold_of[i] = (pos.len() + k) % folds;
    }
    for f in 0..folds {
        let p = pos.iter().filter(|&&i| fold_of[i] == f).count();
        let n = neg.iter().filter(|&&i| fold_of[i] == f).count();
        if p == 0 || n == 0 {
            return Err(Error::Stratification {
                fold: f,
                positives: p,
                negatives: n,
            });
        }
    }
    Ok(fold_of)
}

/// Cross-validate the detector `template` (method, variant, `D`,
/// standardization) over `grid` on the given training pixels.
pub fn cv_tune(
    x: &PixelMatrix,
    y: &PixelMatrix,
    truth: &Mask,
    grid: &GridSpec,
    template: &DetectorConfig,
    exec: Execution,
) -> Result<TuneResult> {
    let method = template.method;
    grid.validate(method)?;
    if x.n() != y.n() || x.n() != truth.len() {
        return Err(Error::shape("tuning inputs", x.n(), format!("{} / {}", y.n(), truth.len())));
    }
    let fold_of = stratified_folds(truth.data(), grid.folds, derive_seed(grid.seed, &[TAG_FOLDS]))?;
    let sigmas: Vec<Option<f64>> = match method {
        Method::Cook => vec![None],
        Method::RCook => grid.sigma_grid.iter().map(|&s| Some(s)).collect(),
    };

    let units: Vec<(usize, usize)> = (0..sigmas.len())
        .flat_map(|s| (0..grid.folds).map(move |f| (s, f)))
        .collect();
    let unit_aucs = exec.map(&units, |&(si, fold)| {
        let train: Vec<usize> = (0..x.n()).filter(|&i| fold_of[i] != fold).collect();
        let test: Vec<usize> = (0..x.n()).filter(|&i| fold_of[i] == fold).collect();
        let cfg = DetectorConfig {
            sigma: sigmas[si],
            ..template.clone()
        };
        let map_seed = derive_seed(grid.seed, &[TAG_CV_RFF, fold as u64, si as u64]);
        fold_aucs(x, y, truth, &train, &test, &cfg, map_seed, &grid.lambda_grid)
    });

    let nl = grid.lambda_grid.len();
    let mut table = Vec::with_capacity(sigmas.len() * nl);
    let mut unit_iter = unit_aucs.into_iter();
    for sigma in &sigmas {
        let mut sums = vec![0.0; nl];
        for _ in 0..grid.folds {
            let aucs = unit_iter.next().expect("one result per unit")?;
            for (s, a) in sums.iter_mut().zip(aucs) {
                *s += a;
            }
        }
        for (li, s) in sums.into_iter().enumerate() {
            table.push(GridEntry {
                sigma: *sigma,
                lambda: grid.lambda_grid[li],
                mean_auc: s / grid.folds as f64,
            });
        }
    }
    let best = table
        .iter()
        .enumerate()
        .max_by(|(i, a), (j, b)| a.mean_auc.total_cmp(&b.mean_auc).then(j.cmp(i)))
        .map(|(_, e)| *e)
        .expect("grid is non-empty");
    Ok(TuneResult {
        method,
        best_sigma: best.sigma,
        best_lambda: best.lambda,
        cv_auc: best.mean_auc,
        table,
    })
}

/// Held-out AUC for every `λ` of one fold at one bandwidth.
#[allow(clippy::too_many_arguments)]
fn fold_aucs(
    x: &PixelMatrix,
    y: &PixelMatrix,
    truth: &Mask,
    train: &[usize],
    test: &[usize],
    cfg: &DetectorConfig,
    map_seed: u64,
    lambdas: &[f64],
) -> Result<Vec<f64>> {
    // work items already run in parallel; keep the inner stages sequential
    let exec = Execution::Sequential;
    let (sx, sy) = pipeline::standardizers(x, y, train, cfg.standardize)?;
    let xs = sx.apply(x)?;
    let ys = sy.apply(y)?;
    let xd = pipeline::design(&xs, cfg, map_seed, exec)?;
    let xt = xd.data().select(Axis(0), train);
    let yt = ys.data().select(Axis(0), train);
    let xv = xd.data().select(Axis(0), test);
    let yv = ys.data().select(Axis(0), test);
    let labels: Vec<bool> = test.iter().map(|&i| truth.data()[i]).collect();

    let eig = SymmetricEigen::new(&linalg::gram(xt.view(), exec));
    let values = eig.values.mapv(|v| v.max(0.0));
    let top = values.iter().fold(0.0f64, |m, &v| m.max(v));
    let floor = top * values.len() as f64 * f64::EPSILON;
    let b = eig.vectors.t().dot(&linalg::cross(xt.view(), yt.view(), exec));
    let u = xv.dot(&eig.vectors);
    let u2 = u.mapv(|v| v * v);

    let mut out = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let denom = values.mapv(|v| v + lambda);
        if denom.iter().any(|&v| v <= floor) {
            let rcond = denom.iter().fold(f64::INFINITY, |m, &v| m.min(v)) / (top + lambda);
            return Err(Error::SingularGram { rcond: rcond.max(0.0) });
        }
        let inv = denom.mapv(f64::recip);
        let coef = &b * &inv.view().insert_axis(Axis(1));
        let resid = &yv - &u.dot(&coef);
        let h: Array1<f64> = u2.dot(&inv);
        let scores = held_out_scores(&resid, &h, cfg.variant);
        out.push(eval::roc_from_slices(&scores, &labels)?.auc);
    }
    Ok(out)
}

/// Cook scores up to the per-fold constant `1 / (d s²)`.
fn held_out_scores(resid: &Array2<f64>, h: &Array1<f64>, variant: CookVariant) -> Vec<f64> {
    let hmax = 1.0 - LEVERAGE_CLAMP;
    let mut scores = vec![0.0; h.len()];
    Zip::from(&mut scores)
        .and(resid.rows())
        .and(h)
        .for_each(|s, e, &hi| {
            let hi = hi.min(hmax);
            let denom = match variant {
                CookVariant::Classical => (1.0 - hi) * (1.0 - hi),
                CookVariant::PaperLiteral => 1.0 - hi * hi,
            };
            *s = e.dot(&e) * hi / denom;
        });
    scores
}
