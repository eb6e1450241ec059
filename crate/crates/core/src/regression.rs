//! Augmented-design ridge least squares: the engine shared by the linear
//! and random-feature detectors.

use ndarray::{s, Array1, Array2, ArrayView2, Axis, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::linalg::{self, Cholesky};
use crate::raster::PixelMatrix;

/// Regression design, one row per pixel. Designs built by [`augment`] or
/// [`crate::rff::rff_design`] end with an all-ones bias column.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix(Array2<f64>);

impl DesignMatrix {
    pub fn new(data: Array2<f64>) -> Self {
        DesignMatrix(data)
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.0.view()
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn p(&self) -> usize {
        self.0.ncols()
    }

    pub fn select(&self, idx: &[usize]) -> DesignMatrix {
        DesignMatrix(self.0.select(Axis(0), idx))
    }
}

/// `[X, 1]`.
pub fn augment(x: &PixelMatrix) -> DesignMatrix {
    let (n, d) = x.data().dim();
    let mut out = Array2::ones((n, d + 1));
    out.slice_mut(s![.., ..d]).assign(x.data());
    DesignMatrix(out)
}

/// A fitted ridge model `W = (XᵀX + λI)⁻¹ XᵀY`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub weights: Array2<f64>,
    pub gram_inverse: Array2<f64>,
    pub lambda: f64,
    /// Training residual variance; `None` when the fit leaves no residual
    /// degrees of freedom (`n <= p`).
    pub mse: Option<f64>,
}

impl LinearModel {
    pub fn p(&self) -> usize {
        self.weights.nrows()
    }

    pub fn d_out(&self) -> usize {
        self.weights.ncols()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&LinearModelDoc::from(self))?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: LinearModelDoc = serde_json::from_str(s)?;
        doc.try_into()
    }
}

#[derive(Serialize, Deserialize)]
struct LinearModelDoc {
    weights: Vec<Vec<f64>>,
    gram_inverse: Vec<Vec<f64>>,
    lambda: f64,
    mse: Option<f64>,
    p: usize,
    d_out: usize,
}

fn to_nested(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn from_nested(name: &'static str, rows: Vec<Vec<f64>>, ncols: usize) -> Result<Array2<f64>> {
    let nrows = rows.len();
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Array2::from_shape_vec((nrows, ncols), flat).map_err(|e| Error::shape(name, ncols, e))
}

impl From<&LinearModel> for LinearModelDoc {
    fn from(m: &LinearModel) -> Self {
        LinearModelDoc {
            weights: to_nested(&m.weights),
            gram_inverse: to_nested(&m.gram_inverse),
            lambda: m.lambda,
            mse: m.mse,
            p: m.p(),
            d_out: m.d_out(),
        }
    }
}

impl TryFrom<LinearModelDoc> for LinearModel {
    type Error = Error;

    fn try_from(doc: LinearModelDoc) -> Result<Self> {
        let weights = from_nested("weights", doc.weights, doc.d_out)?;
        let gram_inverse = from_nested("gram_inverse", doc.gram_inverse, doc.p)?;
        if weights.nrows() != doc.p || gram_inverse.nrows() != doc.p {
            return Err(Error::shape("model rows", doc.p, weights.nrows()));
        }
        Ok(LinearModel {
            weights,
            gram_inverse,
            lambda: doc.lambda,
            mse: doc.mse,
        })
    }
}

/// Fit `Y ≈ Xd W` with ridge strength `lambda` added to every diagonal
/// entry of the Gram, bias included.
pub fn fit(xd: &DesignMatrix, y: &PixelMatrix, lambda: f64, exec: Execution) -> Result<LinearModel> {
    if xd.n() != y.n() {
        return Err(Error::shape("fit rows", xd.n(), y.n()));
    }
    if lambda < 0.0 || !lambda.is_finite() {
        return Err(Error::invalid("lambda", format!("{lambda} must be finite and >= 0")));
    }
    let mut g = linalg::gram(xd.view(), exec);
    g.diag_mut().mapv_inplace(|v| v + lambda);
    let chol = Cholesky::new(&g)?;
    let xty = linalg::cross(xd.view(), y.data().view(), exec);
    let weights = chol.solve(&xty);
    let gram_inverse = chol.inverse();

    let yhat = linalg::row_blocked_product(xd.view(), weights.view(), exec);
    let e = y.data() - &yhat;
    let mse = sum_squares(&e, exec) / (y.bands() as f64);
    let mse = if xd.n() > xd.p() {
        Some(mse / (xd.n() - xd.p()) as f64)
    } else {
        None
    };
    Ok(LinearModel {
        weights,
        gram_inverse,
        lambda,
        mse,
    })
}

pub fn predict(m: &LinearModel, xd: &DesignMatrix, exec: Execution) -> Result<PixelMatrix> {
    if xd.p() != m.p() {
        return Err(Error::shape("predict columns", m.p(), xd.p()));
    }
    PixelMatrix::from_samples(linalg::row_blocked_product(xd.view(), m.weights.view(), exec))
}

pub fn residuals(y: &PixelMatrix, yhat: &PixelMatrix) -> Result<PixelMatrix> {
    if y.data().dim() != yhat.data().dim() {
        return Err(Error::shape(
            "residuals",
            format!("{:?}", y.data().dim()),
            format!("{:?}", yhat.data().dim()),
        ));
    }
    PixelMatrix::new(y.data() - yhat.data(), y.rows(), y.cols())
}

/// `hᵢ = x̃ᵢᵀ (XᵀX + λI)⁻¹ x̃ᵢ` for every row of `xd`.
pub fn leverages(m: &LinearModel, xd: &DesignMatrix, exec: Execution) -> Result<Array1<f64>> {
    if xd.p() != m.p() {
        return Err(Error::shape("leverage columns", m.p(), xd.p()));
    }
    Ok(quadratic_forms(xd.view(), &m.gram_inverse, exec))
}

/// Row-wise `xᵢᵀ A xᵢ`, clamped at zero.
pub(crate) fn quadratic_forms(x: ArrayView2<f64>, a: &Array2<f64>, exec: Execution) -> Array1<f64> {
    let parts = exec.map_row_blocks(x, |_, block| {
        let xa = block.dot(a);
        let mut h = Array1::zeros(block.nrows());
        Zip::from(&mut h)
            .and(xa.rows())
            .and(block.rows())
            .for_each(|h, u, v| *h = u.dot(&v).max(0.0));
        h
    });
    let mut out = Vec::with_capacity(x.nrows());
    for p in parts {
        out.extend(p);
    }
    Array1::from(out)
}

/// `s² = Σᵢ‖eᵢ‖² / (d (n − p))`.
pub fn residual_variance(e: &PixelMatrix, p: usize) -> Result<f64> {
    let (n, d) = e.data().dim();
    if n <= p {
        return Err(Error::DegreesOfFreedom { nd: n * d, p });
    }
    Ok(sum_squares(e.data(), Execution::Sequential) / (d * (n - p)) as f64)
}

fn sum_squares(e: &Array2<f64>, exec: Execution) -> f64 {
    exec.map_row_blocks(e.view(), |_, b| b.iter().map(|v| v * v).sum::<f64>())
        .into_iter()
        .sum()
}

/// Per-band affine map to zero mean and unit variance, estimated on a
/// training subset and applied to every pixel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    /// Statistics over the rows `idx` of `m`. Constant bands keep scale 1.
    pub fn fit(m: &PixelMatrix, idx: &[usize]) -> Result<Self> {
        if idx.is_empty() {
            return Err(Error::invalid("training set", "empty"));
        }
        let d = m.bands();
        let nf = idx.len() as f64;
        let mut mean = vec![0.0; d];
        for &i in idx {
            for (acc, v) in mean.iter_mut().zip(m.data().row(i)) {
                *acc += v;
            }
        }
        mean.iter_mut().for_each(|v| *v /= nf);
        let mut var = vec![0.0; d];
        for &i in idx {
            for ((acc, v), mu) in var.iter_mut().zip(m.data().row(i)).zip(&mean) {
                *acc += (v - mu) * (v - mu);
            }
        }
        let scale = var
            .into_iter()
            .map(|v| {
                let sd = (v / nf).sqrt();
                if sd > 0.0 && sd.is_finite() {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Standardizer { mean, scale })
    }

    pub fn identity(d: usize) -> Self {
        Standardizer {
            mean: vec![0.0; d],
            scale: vec![1.0; d],
        }
    }

    pub fn apply(&self, m: &PixelMatrix) -> Result<PixelMatrix> {
        if m.bands() != self.mean.len() {
            return Err(Error::shape("standardize bands", self.mean.len(), m.bands()));
        }
        let mut data = m.data().clone();
        for mut row in data.rows_mut() {
            for ((v, mu), sd) in row.iter_mut().zip(&self.mean).zip(&self.scale) {
                *v = (*v - mu) / sd;
            }
        }
        PixelMatrix::new(data, m.rows(), m.cols())
    }
}
