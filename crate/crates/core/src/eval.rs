//! ROC analysis: curve construction with grouped ties, trapezoidal AUC,
//! operating-point selection and thresholding.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{write_file, Mask, ScoreMap};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    /// Pixels with score `>=` this value are called positive. The first
    /// vertex uses `+inf`.
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
    pub distance: f64,
}

/// Class counts `(positives, negatives)`, rejecting single-class truth.
pub fn class_counts(truth: &[bool]) -> Result<(usize, usize)> {
    let pos = truth.iter().filter(|&&b| b).count();
    let neg = truth.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::DegenerateTruth {
            positives: pos,
            negatives: neg,
        });
    }
    Ok((pos, neg))
}

pub fn roc(scores: &ScoreMap, truth: &Mask) -> Result<RocCurve> {
    if scores.len() != truth.len() {
        return Err(Error::shape("roc truth", scores.len(), truth.len()));
    }
    roc_from_slices(&scores.scores().to_vec(), truth.data())
}

/// ROC over raw slices; one vertex per distinct score, descending.
pub fn roc_from_slices(scores: &[f64], truth: &[bool]) -> Result<RocCurve> {
    if scores.len() != truth.len() {
        return Err(Error::shape("roc truth", scores.len(), truth.len()));
    }
    let (pos, neg) = class_counts(truth)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![RocPoint {
        fpr: 0.0,
        tpr: 0.0,
        threshold: f64::INFINITY,
    }];
    // twice the trapezoid area in units of one positive-negative pair
    let mut area2: u128 = 0;
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut k = 0;
    while k < order.len() {
        let t = scores[order[k]];
        let (tp0, fp0) = (tp, fp);
        while k < order.len() && scores[order[k]] == t {
            if truth[order[k]] {
                tp += 1;
            } else {
                fp += 1;
            }
            k += 1;
        }
        area2 += ((fp - fp0) as u128) * ((tp + tp0) as u128);
        points.push(RocPoint {
            fpr: fp as f64 / neg as f64,
            tpr: tp as f64 / pos as f64,
            threshold: t,
        });
    }
    let auc = area2 as f64 / (2.0 * pos as f64 * neg as f64);
    Ok(RocCurve { points, auc })
}

/// Trapezoidal area under the stored vertices.
pub fn trapezoid_area(points: &[RocPoint]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
        .sum()
}

/// Vertex nearest to `(0, 1)`; ties prefer lower FPR, then higher threshold.
pub fn best_operating_point(r: &RocCurve) -> OperatingPoint {
    let d2 = |p: &RocPoint| p.fpr * p.fpr + (1.0 - p.tpr) * (1.0 - p.tpr);
    let best = r
        .points
        .iter()
        .min_by(|a, b| {
            d2(a)
                .total_cmp(&d2(b))
                .then(a.fpr.total_cmp(&b.fpr))
                .then(b.threshold.total_cmp(&a.threshold))
        })
        .expect("ROC curve has at least two vertices");
    OperatingPoint {
        threshold: best.threshold,
        fpr: best.fpr,
        tpr: best.tpr,
        distance: d2(best).sqrt(),
    }
}

/// Pixel is anomalous iff `score >= t`.
pub fn apply_threshold(scores: &ScoreMap, t: f64) -> Mask {
    let data = scores.scores().iter().map(|&s| s >= t).collect();
    Mask::new(data, scores.rows(), scores.cols()).expect("score map shape is consistent")
}

pub fn roc_csv(r: &RocCurve) -> String {
    let mut out = String::from("fpr,tpr,threshold\n");
    for p in &r.points {
        let _ = writeln!(out, "{},{},{}", p.fpr, p.tpr, p.threshold);
    }
    let _ = writeln!(out, "# auc={}", r.auc);
    out
}

pub fn export_roc_csv(r: &RocCurve, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), roc_csv(r).as_bytes())
}

/// Inverse of [`roc_csv`].
pub fn parse_roc_csv(text: &str) -> Result<RocCurve> {
    let err = |field: &'static str, detail: String| Error::Format {
        what: "ROC CSV",
        field,
        detail,
    };
    let mut lines = text.lines();
    match lines.next() {
        Some("fpr,tpr,threshold") => {}
        other => return Err(err("header", format!("{other:?}"))),
    }
    let num = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| err("value", format!("{s:?}")))
    };
    let mut points = Vec::new();
    let mut auc = None;
    for line in lines {
        if let Some(v) = line.strip_prefix("# auc=") {
            auc = Some(num(v)?);
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 3 {
            return Err(err("row", format!("{line:?}")));
        }
        points.push(RocPoint {
            fpr: num(f[0])?,
            tpr: num(f[1])?,
            threshold: num(f[2])?,
        });
    }
    let auc = auc.ok_or_else(|| err("auc", "missing trailing auc row".into()))?;
    Ok(RocCurve { points, auc })
}
