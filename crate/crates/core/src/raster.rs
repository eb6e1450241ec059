//! Pixel matrices, masks, score maps and their on-disk formats.
//!
//! Matrix files (`.ccmx`) are laid out as
//!
//! ```text
//! b"CCMX1\0"            magic, 6 bytes
//! u8                    format version (1)
//! u32 LE x 3            rows, cols, bands
//! f64 LE x rows*cols*bands   row-major, band-interleaved-by-pixel
//! ```
//!
//! A file written with `cols == 1` may carry a sidecar `<path>.shape.json`
//! holding `{"rows": R, "cols": C}`, which reinterprets the `(n, d)` payload
//! as an `R x C` raster.
//!
//! Masks and heatmaps are binary PGM (P5) with maxval 255.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MATRIX_MAGIC: &[u8; 6] = b"CCMX1\0";
pub const MATRIX_VERSION: u8 = 1;
const HEADER_LEN: usize = 6 + 1 + 12;

/// An image flattened to `n = rows * cols` pixels of `bands` values each.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelMatrix {
    data: Array2<f64>,
    rows: usize,
    cols: usize,
}

impl PixelMatrix {
    pub fn new(data: Array2<f64>, rows: usize, cols: usize) -> Result<Self> {
        if rows * cols != data.nrows() {
            return Err(Error::shape(
                "pixel matrix",
                format!("{} pixels", rows * cols),
                format!("{} rows", data.nrows()),
            ));
        }
        if data.ncols() == 0 {
            return Err(Error::invalid("bands", "must be at least 1"));
        }
        check_finite(data.iter())?;
        Ok(PixelMatrix { data, rows, cols })
    }

    /// A single-column raster (`rows = n`, `cols = 1`).
    pub fn from_samples(data: Array2<f64>) -> Result<Self> {
        let n = data.nrows();
        Self::new(data, n, 1)
    }

    /// Row-major `rows x cols x bands` values.
    pub fn from_vec(values: Vec<f64>, rows: usize, cols: usize, bands: usize) -> Result<Self> {
        let data = Array2::from_shape_vec((rows * cols, bands), values)
            .map_err(|e| Error::shape("pixel matrix", rows * cols * bands, e))?;
        Self::new(data, rows, cols)
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn into_data(self) -> Array2<f64> {
        self.data
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn bands(&self) -> usize {
        self.data.ncols()
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Pixels at `idx`, as a single-column raster.
    pub fn select(&self, idx: &[usize]) -> PixelMatrix {
        let data = self.data.select(ndarray::Axis(0), idx);
        PixelMatrix {
            rows: idx.len(),
            cols: 1,
            data,
        }
    }
}

/// Per-pixel boolean labels (ground truth or a thresholded detection).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    data: Vec<bool>,
    rows: usize,
    cols: usize,
}

impl Mask {
    pub fn new(data: Vec<bool>, rows: usize, cols: usize) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::shape("mask", rows * cols, data.len()));
        }
        Ok(Mask { data, rows, cols })
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn count_true(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn select(&self, idx: &[usize]) -> Mask {
        Mask {
            data: idx.iter().map(|&i| self.data[i]).collect(),
            rows: idx.len(),
            cols: 1,
        }
    }
}

/// Non-negative per-pixel anomaly scores aligned to a raster.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMap {
    scores: Array1<f64>,
    rows: usize,
    cols: usize,
}

impl ScoreMap {
    pub fn new(scores: Array1<f64>, rows: usize, cols: usize) -> Result<Self> {
        if rows * cols != scores.len() {
            return Err(Error::shape("score map", rows * cols, scores.len()));
        }
        for (index, &s) in scores.iter().enumerate() {
            if !s.is_finite() {
                return Err(Error::NonFinite { index });
            }
            if s < 0.0 {
                return Err(Error::invalid(
                    "score",
                    format!("negative score {s} at pixel {index}"),
                ));
            }
        }
        Ok(ScoreMap { scores, rows, cols })
    }

    pub fn scores(&self) -> &Array1<f64> {
        &self.scores
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn select(&self, idx: &[usize]) -> ScoreMap {
        ScoreMap {
            scores: idx.iter().map(|&i| self.scores[i]).collect(),
            rows: idx.len(),
            cols: 1,
        }
    }

    /// Single-band matrix view for the `.ccmx` format.
    pub fn to_matrix(&self) -> PixelMatrix {
        let data = self.scores.clone().insert_axis(ndarray::Axis(1));
        PixelMatrix {
            data,
            rows: self.rows,
            cols: self.cols,
        }
    }

    pub fn from_matrix(m: PixelMatrix) -> Result<Self> {
        if m.bands() != 1 {
            return Err(Error::shape("score map bands", 1, m.bands()));
        }
        let (rows, cols) = (m.rows, m.cols);
        let scores = m.data.column(0).to_owned();
        ScoreMap::new(scores, rows, cols)
    }
}

fn check_finite<'a>(values: impl Iterator<Item = &'a f64>) -> Result<()> {
    for (index, v) in values.enumerate() {
        if !v.is_finite() {
            return Err(Error::NonFinite { index });
        }
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct ShapeSidecar {
    rows: usize,
    cols: usize,
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".shape.json");
    PathBuf::from(s)
}

fn format_err(field: &'static str, detail: impl Into<String>) -> Error {
    Error::Format {
        what: "matrix",
        field,
        detail: detail.into(),
    }
}

pub fn encode_matrix(m: &PixelMatrix) -> Result<Vec<u8>> {
    let dims = [m.rows, m.cols, m.bands()];
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * m.data.len());
    out.extend_from_slice(MATRIX_MAGIC);
    out.push(MATRIX_VERSION);
    for d in dims {
        let d = u32::try_from(d).map_err(|_| format_err("shape", format!("{d} exceeds u32")))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    for v in m.data.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_matrix(bytes: &[u8]) -> Result<PixelMatrix> {
    if bytes.len() < HEADER_LEN {
        return Err(format_err(
            "header",
            format!("{} bytes, need {HEADER_LEN}", bytes.len()),
        ));
    }
    if &bytes[..6] != MATRIX_MAGIC {
        return Err(format_err("magic", format!("{:?}", &bytes[..6])));
    }
    if bytes[6] != MATRIX_VERSION {
        return Err(format_err("version", format!("unsupported version {}", bytes[6])));
    }
    let dim = |k: usize| {
        let off = 7 + 4 * k;
        u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()) as usize
    };
    let (rows, cols, bands) = (dim(0), dim(1), dim(2));
    if bands == 0 {
        return Err(format_err("shape", "bands must be at least 1"));
    }
    let count = rows
        .checked_mul(cols)
        .and_then(|v| v.checked_mul(bands))
        .ok_or_else(|| format_err("shape", "element count overflows"))?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != count * 8 {
        return Err(format_err(
            "payload",
            format!("{} bytes for shape ({rows}, {cols}, {bands}), expected {}", payload.len(), count * 8),
        ));
    }
    let values: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    PixelMatrix::from_vec(values, rows, cols, bands)
}

pub fn save_matrix(m: &PixelMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_matrix(m)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_matrix(path: impl AsRef<Path>) -> Result<PixelMatrix> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let m = decode_matrix(&bytes)?;
    let side = sidecar_path(path);
    if !side.exists() {
        return Ok(m);
    }
    let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let shape: ShapeSidecar = serde_json::from_str(&text)?;
    if m.cols != 1 {
        return Err(format_err(
            "shape",
            format!("sidecar given for a 3-axis file with cols = {}", m.cols),
        ));
    }
    if shape.rows * shape.cols != m.n() {
        return Err(Error::shape(
            "sidecar shape",
            m.n(),
            format!("{} x {}", shape.rows, shape.cols),
        ));
    }
    PixelMatrix::new(m.data, shape.rows, shape.cols)
}

pub fn encode_pgm(pixels: &[u8], rows: usize, cols: usize) -> Vec<u8> {
    let mut out = format!("P5\n{cols} {rows}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    out
}

/// Parse a binary PGM, returning `(pixels, rows, cols)`.
pub fn decode_pgm(bytes: &[u8]) -> Result<(Vec<u8>, usize, usize)> {
    let err = |field: &'static str, detail: String| Error::Format {
        what: "PGM",
        field,
        detail,
    };
    let mut pos = 0;
    let mut token = |field: &'static str| -> Result<String> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(err(field, "unexpected end of header".into()));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    let magic = token("magic")?;
    if magic != "P5" {
        return Err(err("magic", format!("{magic:?}, expected \"P5\"")));
    }
    let parse = |field: &'static str, s: String| {
        s.parse::<usize>()
            .map_err(|_| err(field, format!("{s:?} is not an integer")))
    };
    let cols = parse("width", token("width")?)?;
    let rows = parse("height", token("height")?)?;
    let maxval = parse("maxval", token("maxval")?)?;
    if maxval == 0 || maxval > 255 {
        return Err(err("maxval", format!("{maxval}, only 8-bit images supported")));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let need = rows * cols;
    let raster = bytes.get(pos..).unwrap_or(&[]);
    if raster.len() != need {
        return Err(err(
            "raster",
            format!("{} bytes for {cols}x{rows}, expected {need}", raster.len()),
        ));
    }
    Ok((raster.to_vec(), rows, cols))
}

pub fn save_mask(m: &Mask, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let pixels: Vec<u8> = m.data.iter().map(|&b| if b { 255 } else { 0 }).collect();
    write_file(path, &encode_pgm(&pixels, m.rows, m.cols))
}

pub fn load_mask(path: impl AsRef<Path>) -> Result<Mask> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (pixels, rows, cols) = decode_pgm(&bytes)?;
    Mask::new(pixels.into_iter().map(|p| p != 0).collect(), rows, cols)
}

/// Gray levels for a score map: min maps to 0, max to 255, rounding half up.
/// A constant map renders as all zeros.
pub fn heatmap_levels(s: &ScoreMap) -> Vec<u8> {
    let (lo, hi) = s
        .scores
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let span = hi - lo;
    if s.is_empty() || span <= 0.0 || !span.is_finite() {
        return vec![0; s.len()];
    }
    s.scores
        .iter()
        .map(|&v| {
            let level = ((v - lo) / span * 255.0 + 0.5).floor();
            level.clamp(0.0, 255.0) as u8
        })
        .collect()
}

pub fn save_heatmap(s: &ScoreMap, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &encode_pgm(&heatmap_levels(s), s.rows, s.cols))
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}
