//! Cook's distance from residuals and leverages, and the refit-based
//! deletion form used to certify it.

use ndarray::{Array1, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::raster::{PixelMatrix, ScoreMap};
use crate::regression::{self, DesignMatrix};

/// Leverages at or above `1 - LEVERAGE_CLAMP` are clamped and reported.
pub const LEVERAGE_CLAMP: f64 = 1e-12;

/// Denominator convention for the closed-form score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CookVariant {
    /// `‖e‖² h / (d s² (1 − h)²)`; equals the deletion form.
    #[default]
    Classical,
    /// `‖e‖² h / (d s⁴ (1 − h²))`, the alternative printed form.
    PaperLiteral,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CookScores {
    pub scores: ScoreMap,
    /// Pixels whose leverage was clamped to `1 - LEVERAGE_CLAMP`.
    pub saturated: Vec<usize>,
}

pub fn cook_scores(
    e: &PixelMatrix,
    h: &Array1<f64>,
    d_out: usize,
    s2: f64,
    variant: CookVariant,
    exec: Execution,
) -> Result<CookScores> {
    if e.n() != h.len() {
        return Err(Error::shape("leverage length", e.n(), h.len()));
    }
    if d_out != e.bands() {
        return Err(Error::shape("output dimension", e.bands(), d_out));
    }
    if s2 <= 0.0 || !s2.is_finite() {
        return Err(Error::invalid("residual variance", format!("{s2} must be positive")));
    }
    let scale = match variant {
        CookVariant::Classical => d_out as f64 * s2,
        CookVariant::PaperLiteral => d_out as f64 * s2 * s2,
    };
    let hmax = 1.0 - LEVERAGE_CLAMP;
    let parts = exec.map_row_blocks(e.data().view(), |b, block| {
        let offset = b * crate::exec::ROW_BLOCK;
        let mut out = Vec::with_capacity(block.nrows());
        let mut sat = Vec::new();
        for (k, row) in block.rows().into_iter().enumerate() {
            let mut hi = h[offset + k];
            if hi >= hmax {
                hi = hmax;
                sat.push(offset + k);
            }
            let e2 = row.dot(&row);
            let denom = match variant {
                CookVariant::Classical => (1.0 - hi) * (1.0 - hi),
                CookVariant::PaperLiteral => 1.0 - hi * hi,
            };
            out.push(e2 * hi / (scale * denom));
        }
        (out, sat)
    });
    let mut scores = Vec::with_capacity(e.n());
    let mut saturated = Vec::new();
    for (s, sat) in parts {
        scores.extend(s);
        saturated.extend(sat);
    }
    Ok(CookScores {
        scores: ScoreMap::new(Array1::from(scores), e.rows(), e.cols())?,
        saturated,
    })
}

/// Deletion form: refit without row `i` (no ridge) and sum the squared
/// changes of all `n` fitted values, divided by `d_out · s2`.
pub fn cook_deletion_oracle(
    xd: &DesignMatrix,
    y: &PixelMatrix,
    i: usize,
    d_out: usize,
    s2: f64,
) -> Result<f64> {
    let n = xd.n();
    if i >= n {
        return Err(Error::invalid("row index", format!("{i} >= {n}")));
    }
    if n < xd.p() + 2 {
        return Err(Error::invalid(
            "deletion oracle",
            format!("needs n >= p + 2, got n = {n}, p = {}", xd.p()),
        ));
    }
    let exec = Execution::Sequential;
    let full = regression::fit(xd, y, 0.0, exec)?;
    let keep: Vec<usize> = (0..n).filter(|&j| j != i).collect();
    let reduced = regression::fit(&xd.select(&keep), &y.select(&keep), 0.0, exec)?;
    let a = regression::predict(&full, xd, exec)?;
    let b = regression::predict(&reduced, xd, exec)?;
    let mut total = 0.0;
    Zip::from(a.data()).and(b.data()).for_each(|u, v| total += (u - v) * (u - v));
    Ok(total / (d_out as f64 * s2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::{array, Array2};

    fn pm(a: Array2<f64>) -> PixelMatrix {
        PixelMatrix::from_samples(a).unwrap()
    }

    fn run(e: Array2<f64>, h: Array1<f64>, s2: f64, v: CookVariant) -> CookScores {
        let d = e.ncols();
        cook_scores(&pm(e), &h, d, s2, v, Execution::Sequential).unwrap()
    }

    #[test]
    fn zero_residual_scores_zero() {
        for v in [CookVariant::Classical, CookVariant::PaperLiteral] {
            let c = run(Array2::zeros((3, 2)), array![0.1, 0.5, 0.9], 2.0, v);
            assert!(c.scores.scores().iter().all(|&s| s == 0.0));
        }
    }

    #[test]
    fn classical_hand_value() {
        let c = run(array![[2.0]], array![0.5], 1.0, CookVariant::Classical);
        assert_relative_eq!(c.scores.scores()[0], 8.0, max_relative = 1e-15);
        // (4 * 0.5) / (1 * 1 * (1 - 0.25))
        let c = run(array![[2.0]], array![0.5], 1.0, CookVariant::PaperLiteral);
        assert_relative_eq!(c.scores.scores()[0], 8.0 / 3.0, max_relative = 1e-15);
    }

    #[test]
    fn intercept_only_example() {
        let xd = DesignMatrix::new(Array2::ones((4, 1)));
        let y = pm(array![[0.0], [0.0], [0.0], [4.0]]);
        let m = regression::fit(&xd, &y, 0.0, Execution::Sequential).unwrap();
        let yhat = regression::predict(&m, &xd, Execution::Sequential).unwrap();
        let e = regression::residuals(&y, &yhat).unwrap();
        assert_eq!(e.data().column(0).to_vec(), vec![-1.0, -1.0, -1.0, 3.0]);
        let s2 = m.mse.unwrap();
        assert_relative_eq!(s2, 4.0, max_relative = 1e-14);
        let h = regression::leverages(&m, &xd, Execution::Sequential).unwrap();
        let c = cook_scores(&e, &h, 1, s2, CookVariant::Classical, Execution::Sequential).unwrap();
        assert_relative_eq!(c.scores.scores()[3], 1.0, max_relative = 1e-12);
        let oracle = cook_deletion_oracle(&xd, &y, 3, 1, s2).unwrap();
        assert_relative_eq!(oracle, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn oracle_is_zero_on_exact_fit() {
        let x = pm(array![[0.0], [1.0], [2.0], [3.0], [5.0]]);
        let xd = regression::augment(&x);
        let y = pm(xd.data().dot(&array![[2.0], [-1.0]]));
        for i in 0..5 {
            assert!(cook_deletion_oracle(&xd, &y, i, 1, 1.0).unwrap() < 1e-20);
        }
    }

    #[test]
    fn duplicate_rows_give_finite_small_influence() {
        let x = pm(array![[0.0], [1.0], [1.0], [2.0], [3.0], [4.0]]);
        let xd = regression::augment(&x);
        let y = pm(array![[0.1], [1.3], [1.3], [1.8], [3.2], [3.9]]);
        let d = cook_deletion_oracle(&xd, &y, 1, 1, 1.0).unwrap();
        assert!(d.is_finite() && d > 0.0);
    }

    #[test]
    fn saturated_leverage_is_clamped_and_reported() {
        let c = run(array![[1.0], [1.0], [1.0]], array![0.3, 1.0, 1.7], 1.0, CookVariant::Classical);
        assert_eq!(c.saturated, vec![1, 2]);
        let s = c.scores.scores();
        assert!(s.iter().all(|v| v.is_finite()));
        assert_eq!(s[1], s[2]);
    }

    #[test]
    fn rejects_bad_arguments() {
        let e = pm(array![[1.0], [2.0]]);
        let x = Execution::Sequential;
        assert!(cook_scores(&e, &array![0.1], 1, 1.0, CookVariant::Classical, x).is_err());
        assert!(cook_scores(&e, &array![0.1, 0.2], 1, 0.0, CookVariant::Classical, x).is_err());
        assert!(cook_scores(&e, &array![0.1, 0.2], 2, 1.0, CookVariant::Classical, x).is_err());
    }

    #[test]
    fn zero_leverage_scores_zero() {
        let c = run(array![[3.0]], array![0.0], 1.0, CookVariant::Classical);
        assert_eq!(c.scores.scores()[0], 0.0);
    }
}
