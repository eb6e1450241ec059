//! End-to-end detector: standardize, optionally lift to random features,
//! fit on training pixels, score every pixel, evaluate.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::cook::{self, CookVariant};
use crate::error::{Error, Result};
use crate::eval::{self, OperatingPoint, RocCurve};
use crate::exec::Execution;
use crate::raster::{Mask, PixelMatrix, ScoreMap};
use crate::regression::{self, DesignMatrix, Standardizer};
use crate::rff;
use crate::seed::{derive_seed, TAG_RFF, TAG_SPLIT};

pub const DEFAULT_FEATURES: usize = 100;
pub const DEFAULT_SAMPLES: usize = 10_000;
pub const DEFAULT_TRAIN_FRACTION: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Cook,
    #[serde(rename = "rcook")]
    RCook,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub method: Method,
    pub variant: CookVariant,
    pub lambda: f64,
    /// Kernel bandwidth, RCook only.
    pub sigma: Option<f64>,
    /// Random feature count `D`, RCook only.
    pub n_features: usize,
    pub seed: u64,
    pub standardize: bool,
}

impl DetectorConfig {
    pub fn cook(lambda: f64, seed: u64) -> Self {
        DetectorConfig {
            method: Method::Cook,
            variant: CookVariant::Classical,
            lambda,
            sigma: None,
            n_features: DEFAULT_FEATURES,
            seed,
            standardize: true,
        }
    }

    pub fn rcook(sigma: f64, lambda: f64, seed: u64) -> Self {
        DetectorConfig {
            method: Method::RCook,
            sigma: Some(sigma),
            ..Self::cook(lambda, seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambda < 0.0 || !self.lambda.is_finite() {
            return Err(Error::invalid("lambda", format!("{} must be finite and >= 0", self.lambda)));
        }
        if self.method == Method::RCook {
            match self.sigma {
                Some(s) if s > 0.0 && s.is_finite() => {}
                Some(s) => return Err(Error::invalid("sigma", format!("{s} must be positive"))),
                None => return Err(Error::invalid("sigma", "required for rcook")),
            }
            if self.n_features == 0 {
                return Err(Error::invalid("D", "must be at least 1"));
            }
        }
        Ok(())
    }

    /// Seed of the random feature map used by [`detect`].
    pub fn map_seed(&self) -> u64 {
        derive_seed(self.seed, &[TAG_RFF])
    }
}

/// Regression design for `x` under `cfg` (already standardized input).
pub fn design(x: &PixelMatrix, cfg: &DetectorConfig, map_seed: u64, exec: Execution) -> Result<DesignMatrix> {
    match cfg.method {
        Method::Cook => Ok(regression::augment(x)),
        Method::RCook => {
            let sigma = cfg.sigma.ok_or_else(|| Error::invalid("sigma", "required for rcook"))?;
            let map = rff::sample_map(x.bands(), cfg.n_features, sigma, map_seed)?;
            rff::rff_design(&map, x, exec)
        }
    }
}

/// Train-split standardizers for X and Y (identity when disabled).
pub fn standardizers(
    x: &PixelMatrix,
    y: &PixelMatrix,
    train_idx: &[usize],
    enabled: bool,
) -> Result<(Standardizer, Standardizer)> {
    if enabled {
        Ok((Standardizer::fit(x, train_idx)?, Standardizer::fit(y, train_idx)?))
    } else {
        Ok((Standardizer::identity(x.bands()), Standardizer::identity(y.bands())))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub scores: ScoreMap,
    /// Pixels whose leverage was clamped.
    pub saturated: Vec<usize>,
    /// Residual variance used in the score denominator.
    pub s2: f64,
    pub p: usize,
}

/// Score every pixel of the scene with a model fit on `train_idx`.
pub fn detect(
    x: &PixelMatrix,
    y: &PixelMatrix,
    cfg: &DetectorConfig,
    train_idx: &[usize],
    exec: Execution,
) -> Result<Detection> {
    cfg.validate()?;
    if x.n() != y.n() {
        return Err(Error::shape("image pixels", x.n(), y.n()));
    }
    if train_idx.is_empty() {
        return Err(Error::invalid("training set", "empty"));
    }
    if let Some(&bad) = train_idx.iter().find(|&&i| i >= x.n()) {
        return Err(Error::invalid("training index", format!("{bad} >= {}", x.n())));
    }
    let (sx, sy) = standardizers(x, y, train_idx, cfg.standardize)?;
    let xs = sx.apply(x)?;
    let ys = sy.apply(y)?;
    let xd = design(&xs, cfg, cfg.map_seed(), exec)?;

    let y_train = ys.select(train_idx);
    let model = regression::fit(&xd.select(train_idx), &y_train, cfg.lambda, exec)?;
    let s2 = model.mse.ok_or(Error::DegreesOfFreedom {
        nd: train_idx.len() * y.bands(),
        p: xd.p(),
    })?;
    let s2 = s2.max(variance_floor(&y_train));

    let yhat = regression::predict(&model, &xd, exec)?;
    let e = regression::residuals(&ys, &yhat)?;
    let h = regression::leverages(&model, &xd, exec)?;
    let p = xd.p();
    drop(xd);
    let c = cook::cook_scores(&e, &h, y.bands(), s2, cfg.variant, exec)?;
    Ok(Detection {
        scores: c.scores,
        saturated: c.saturated,
        s2,
        p,
    })
}

/// Lower bound on `s²`: machine epsilon times the mean per-band variance of
/// the training targets, so exact fits score zero instead of `0/0`.
fn variance_floor(y: &PixelMatrix) -> f64 {
    let n = y.n() as f64;
    let mean_var = y
        .data()
        .columns()
        .into_iter()
        .map(|c| {
            let mu = c.sum() / n;
            c.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n
        })
        .sum::<f64>()
        / y.bands() as f64;
    f64::EPSILON * if mean_var > 0.0 { mean_var } else { 1.0 }
}

/// Uniform sample of `n` distinct pixel indices, deterministic per seed.
pub fn sample_indices(total: usize, n: usize, seed: u64) -> Result<Vec<usize>> {
    if n > total {
        return Err(Error::invalid("sample size", format!("{n} exceeds {total} pixels")));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut idx: Vec<usize> = (0..total).collect();
    let (head, _) = idx.partial_shuffle(&mut rng, n);
    Ok(head.to_vec())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PixelSample {
    pub indices: Vec<usize>,
    pub x: PixelMatrix,
    pub y: PixelMatrix,
    pub truth: Mask,
}

pub fn sample_pixels(
    x: &PixelMatrix,
    y: &PixelMatrix,
    truth: &Mask,
    n: usize,
    seed: u64,
) -> Result<PixelSample> {
    if x.n() != y.n() || x.n() != truth.len() {
        return Err(Error::shape("sample inputs", x.n(), format!("{} / {}", y.n(), truth.len())));
    }
    let indices = sample_indices(x.n(), n, seed)?;
    Ok(PixelSample {
        x: x.select(&indices),
        y: y.select(&indices),
        truth: truth.select(&indices),
        indices,
    })
}

/// Split an already-shuffled index list: the first `round(frac · n)` are
/// training pixels, the rest test pixels.
pub fn split(indices: &[usize], train_frac: f64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(train_frac > 0.0 && train_frac <= 1.0) {
        return Err(Error::invalid("train fraction", format!("{train_frac} not in (0, 1]")));
    }
    let k = ((indices.len() as f64) * train_frac).round() as usize;
    let k = k.clamp(1, indices.len());
    Ok((indices[..k].to_vec(), indices[k..].to_vec()))
}

pub fn split_half(indices: &[usize]) -> (Vec<usize>, Vec<usize>) {
    split(indices, 0.5).expect("0.5 is a valid fraction")
}

/// Sampling plan shared by tuning and detection so both see the same
/// training pixels for a given seed.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSplit {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

pub fn experiment_split(total: usize, n_samples: usize, train_frac: f64, seed: u64) -> Result<ExperimentSplit> {
    let idx = sample_indices(total, n_samples, derive_seed(seed, &[TAG_SPLIT]))?;
    let (train, test) = split(&idx, train_frac)?;
    Ok(ExperimentSplit { train, test })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub config: DetectorConfig,
    pub n_train: usize,
    pub n_test: usize,
    /// `None` when the subset holds a single class.
    pub train_auc: Option<f64>,
    pub test_auc: Option<f64>,
    pub full_auc: Option<f64>,
    pub full_roc: Option<RocCurve>,
    /// Nearest-to-(0,1) vertex of the full-image ROC.
    pub operating_point: Option<OperatingPoint>,
    pub detection: Detection,
}

/// Subsample, split, fit on the training part, score the whole image and
/// report AUCs on the train, test and full pixel sets.
pub fn run_experiment(
    x: &PixelMatrix,
    y: &PixelMatrix,
    truth: &Mask,
    cfg: &DetectorConfig,
    n_samples: usize,
    train_frac: f64,
    exec: Execution,
) -> Result<ExperimentReport> {
    if truth.len() != x.n() {
        return Err(Error::shape("truth pixels", x.n(), truth.len()));
    }
    let plan = experiment_split(x.n(), n_samples, train_frac, cfg.seed)?;
    let detection = detect(x, y, cfg, &plan.train, exec)?;
    let subset_auc = |idx: &[usize]| -> Option<f64> {
        let s = detection.scores.select(idx);
        eval::roc(&s, &truth.select(idx)).ok().map(|r| r.auc)
    };
    let full_roc = eval::roc(&detection.scores, truth).ok();
    Ok(ExperimentReport {
        config: cfg.clone(),
        n_train: plan.train.len(),
        n_test: plan.test.len(),
        train_auc: subset_auc(&plan.train),
        test_auc: subset_auc(&plan.test),
        full_auc: full_roc.as_ref().map(|r| r.auc),
        operating_point: full_roc.as_ref().map(eval::best_operating_point),
        full_roc,
        detection,
    })
}
