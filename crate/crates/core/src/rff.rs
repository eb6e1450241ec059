//! Random Fourier features for the Gaussian kernel
//! `k(x, x′) = exp(−‖x − x′‖² / (2σ²))`.
//!
//! Each complex feature `exp(i wₖᵀx)` is carried as the real pair
//! `(cos wₖᵀx, sin wₖᵀx)`, scaled by `1/√D`, so `z(x)ᵀz(x′)` equals the real
//! part of the complex inner product and `‖z(x)‖² = 1`.

use ndarray::{s, Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{Execution, ROW_BLOCK};
use crate::raster::PixelMatrix;
use crate::regression::DesignMatrix;

/// Tag for the frequency stream: ChaCha20 seeded via `seed_from_u64`,
/// standard normals from `rand_distr` 0.5 (ziggurat), drawn row-major and
/// divided by σ.
pub const PRNG_VERSION: &str = "chacha20-stdnormal-v1";

#[derive(Debug, Clone, PartialEq)]
pub struct RffMap {
    /// `D x d`, rows are the frequencies `wₖ ~ N(0, σ⁻² I)`.
    frequencies: Array2<f64>,
    sigma: f64,
    seed: u64,
}

impl RffMap {
    pub fn frequencies(&self) -> &Array2<f64> {
        &self.frequencies
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn n_features(&self) -> usize {
        self.frequencies.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.frequencies.ncols()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&RffMapDoc {
            seed: self.seed,
            sigma: self.sigma,
            n_features: self.n_features(),
            input_dim: self.input_dim(),
            prng_version: PRNG_VERSION.to_string(),
        })?)
    }

    /// Rebuild a map from its JSON description by regenerating frequencies.
    pub fn from_json(s: &str) -> Result<Self> {
        let doc: RffMapDoc = serde_json::from_str(s)?;
        if doc.prng_version != PRNG_VERSION {
            return Err(Error::invalid(
                "prng_version",
                format!("{:?}, this build generates {PRNG_VERSION:?}", doc.prng_version),
            ));
        }
        sample_map(doc.input_dim, doc.n_features, doc.sigma, doc.seed)
    }
}

#[derive(Serialize, Deserialize)]
struct RffMapDoc {
    seed: u64,
    sigma: f64,
    #[serde(rename = "D")]
    n_features: usize,
    #[serde(rename = "d")]
    input_dim: usize,
    prng_version: String,
}

pub fn sample_map(d: usize, n_features: usize, sigma: f64, seed: u64) -> Result<RffMap> {
    if d == 0 {
        return Err(Error::invalid("input dimension", "must be at least 1"));
    }
    if n_features == 0 {
        return Err(Error::invalid("D", "feature count must be at least 1"));
    }
    if sigma <= 0.0 || !sigma.is_finite() {
        return Err(Error::invalid("sigma", format!("{sigma} must be positive and finite")));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let frequencies = Array2::from_shape_simple_fn((n_features, d), || {
        let g: f64 = StandardNormal.sample(&mut rng);
        g / sigma
    });
    Ok(RffMap {
        frequencies,
        sigma,
        seed,
    })
}

fn check_dim(map: &RffMap, x: &PixelMatrix) -> Result<()> {
    if x.bands() != map.input_dim() {
        return Err(Error::shape("feature map input", map.input_dim(), x.bands()));
    }
    Ok(())
}

/// Write `z(xᵢ)` into the first `2D` columns of each row of `out`.
fn fill_features(map: &RffMap, x: ArrayView2<f64>, out: &mut Array2<f64>, exec: Execution) {
    let dn = map.n_features();
    let norm = 1.0 / (dn as f64).sqrt();
    let wt = map.frequencies.t();
    exec.for_each_row_block_mut(out, |b, mut block| {
        let start = b * ROW_BLOCK;
        let xb = x.slice(s![start..start + block.nrows(), ..]);
        let proj = xb.dot(&wt);
        for (mut row, prow) in block.rows_mut().into_iter().zip(proj.rows()) {
            for (k, &t) in prow.iter().enumerate() {
                let (sin, cos) = t.sin_cos();
                row[2 * k] = norm * cos;
                row[2 * k + 1] = norm * sin;
            }
        }
    });
}

/// `n x 2D` real feature matrix.
pub fn transform(map: &RffMap, x: &PixelMatrix, exec: Execution) -> Result<PixelMatrix> {
    check_dim(map, x)?;
    let mut out = Array2::zeros((x.n(), 2 * map.n_features()));
    fill_features(map, x.data().view(), &mut out, exec);
    PixelMatrix::new(out, x.rows(), x.cols())
}

/// Features plus a trailing bias column: `n x (2D + 1)`.
pub fn rff_design(map: &RffMap, x: &PixelMatrix, exec: Execution) -> Result<DesignMatrix> {
    check_dim(map, x)?;
    let mut out = Array2::ones((x.n(), 2 * map.n_features() + 1));
    fill_features(map, x.data().view(), &mut out, exec);
    Ok(DesignMatrix::new(out))
}
