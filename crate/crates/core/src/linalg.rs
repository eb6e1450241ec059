//! Small dense kernels: blocked Gram products, Cholesky, SPD inverse and
//! the symmetric eigendecomposition used by the tuner.

use ndarray::{Array1, Array2, ArrayView2, Zip};

use crate::error::{Error, Result};
use crate::exec::Execution;

/// `Aᵀ A`, accumulated block by block in block order.
pub fn gram(a: ArrayView2<f64>, exec: Execution) -> Array2<f64> {
    let p = a.ncols();
    let partials = exec.map_row_blocks(a, |_, block| block.t().dot(&block));
    let mut g = Array2::zeros((p, p));
    for part in &partials {
        g += part;
    }
    g
}

/// `Aᵀ B` for row-aligned `A` and `B`, accumulated in block order.
pub fn cross(a: ArrayView2<f64>, b: ArrayView2<f64>, exec: Execution) -> Array2<f64> {
    assert_eq!(a.nrows(), b.nrows(), "cross product needs row-aligned operands");
    let blocks: Vec<usize> = (0..a.nrows()).step_by(crate::exec::ROW_BLOCK).collect();
    let partials = exec.map(&blocks, |&start| {
        let end = (start + crate::exec::ROW_BLOCK).min(a.nrows());
        let ab = a.slice(ndarray::s![start..end, ..]);
        let bb = b.slice(ndarray::s![start..end, ..]);
        ab.t().dot(&bb)
    });
    let mut out = Array2::zeros((a.ncols(), b.ncols()));
    for part in &partials {
        out += part;
    }
    out
}

/// `A B` computed per row block of `A`.
pub fn row_blocked_product(a: ArrayView2<f64>, b: ArrayView2<f64>, exec: Execution) -> Array2<f64> {
    let parts = exec.map_row_blocks(a, |_, block| block.dot(&b));
    let mut out = Array2::zeros((a.nrows(), b.ncols()));
    let mut start = 0;
    for part in parts {
        let end = start + part.nrows();
        out.slice_mut(ndarray::s![start..end, ..]).assign(&part);
        start = end;
    }
    out
}

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: Array2<f64>,
}

impl Cholesky {
    /// Factor `a`. Pivots below `p·ε·max(diag)` are treated as singular.
    pub fn new(a: &Array2<f64>) -> Result<Self> {
        let p = a.nrows();
        assert_eq!(p, a.ncols(), "Cholesky needs a square matrix");
        let max_diag = a.diag().iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        if p == 0 || max_diag == 0.0 || !max_diag.is_finite() {
            return Err(Error::SingularGram { rcond: 0.0 });
        }
        let tol = max_diag * p as f64 * f64::EPSILON;
        let mut l = Array2::<f64>::zeros((p, p));
        for j in 0..p {
            let mut d = a[[j, j]];
            for k in 0..j {
                d -= l[[j, k]] * l[[j, k]];
            }
            if d.is_nan() || d <= tol {
                return Err(Error::SingularGram {
                    rcond: d.max(0.0) / max_diag,
                });
            }
            let ljj = d.sqrt();
            l[[j, j]] = ljj;
            for i in j + 1..p {
                let mut s = a[[i, j]];
                for k in 0..j {
                    s -= l[[i, k]] * l[[j, k]];
                }
                l[[i, j]] = s / ljj;
            }
        }
        let chol = Cholesky { l };
        let rcond = chol.rcond_estimate();
        if rcond < p as f64 * f64::EPSILON {
            return Err(Error::SingularGram { rcond });
        }
        Ok(chol)
    }

    /// `(min Lᵢᵢ / max Lᵢᵢ)²`, a cheap lower-bound style estimate of 1/κ(A).
    pub fn rcond_estimate(&self) -> f64 {
        let diag = self.l.diag();
        let (lo, hi) = diag
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        (lo / hi).powi(2)
    }

    pub fn factor(&self) -> &Array2<f64> {
        &self.l
    }

    /// Solve `A X = B` column by column.
    pub fn solve(&self, b: &Array2<f64>) -> Array2<f64> {
        let p = self.l.nrows();
        assert_eq!(b.nrows(), p);
        let mut x = b.clone();
        for mut col in x.columns_mut() {
            // forward: L y = b
            for i in 0..p {
                let mut s = col[i];
                for k in 0..i {
                    s -= self.l[[i, k]] * col[k];
                }
                col[i] = s / self.l[[i, i]];
            }
            // backward: Lᵀ x = y
            for i in (0..p).rev() {
                let mut s = col[i];
                for k in i + 1..p {
                    s -= self.l[[k, i]] * col[k];
                }
                col[i] = s / self.l[[i, i]];
            }
        }
        x
    }

    /// `A⁻¹`, symmetrized.
    pub fn inverse(&self) -> Array2<f64> {
        let p = self.l.nrows();
        let inv = self.solve(&Array2::eye(p));
        let mut sym = inv.clone();
        Zip::from(&mut sym)
            .and(&inv.t())
            .for_each(|s, &t| *s = 0.5 * (*s + t));
        sym
    }
}

/// Eigendecomposition `A = Q diag(values) Qᵀ` of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: Array1<f64>,
    /// Eigenvectors as columns.
    pub vectors: Array2<f64>,
}

impl SymmetricEigen {
    pub fn new(a: &Array2<f64>) -> Self {
        let p = a.nrows();
        let m = nalgebra::DMatrix::from_fn(p, p, |i, j| a[[i, j]]);
        let eig = nalgebra::SymmetricEigen::new(m);
        let values = Array1::from_iter(eig.eigenvalues.iter().copied());
        let vectors = Array2::from_shape_fn((p, p), |(i, j)| eig.eigenvectors[(i, j)]);
        SymmetricEigen { values, vectors }
    }
}
