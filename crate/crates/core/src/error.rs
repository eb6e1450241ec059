use std::io;

use thiserror::Error;

/// Errors produced anywhere in the detector stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },

    #[error("malformed {what} file: {field}: {detail}")]
    Format {
        what: &'static str,
        field: &'static str,
        detail: String,
    },

    #[error("non-finite value at element {index}")]
    NonFinite { index: usize },

    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error("invalid {name}: {detail}")]
    Invalid { name: &'static str, detail: String },

    #[error(
        "Gram matrix is singular or indefinite (reciprocal condition estimate {rcond:.3e}); \
         use a positive lambda"
    )]
    SingularGram { rcond: f64 },

    #[error("non-positive residual degrees of freedom: n*d = {nd}, p = {p}")]
    DegreesOfFreedom { nd: usize, p: usize },

    #[error("degenerate ground truth: {positives} positive and {negatives} negative pixels")]
    DegenerateTruth { positives: usize, negatives: usize },

    #[error(
        "stratification failure: fold {fold} has {positives} positive and {negatives} negative pixels"
    )]
    Stratification {
        fold: usize,
        positives: usize,
        negatives: usize,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub(crate) fn invalid(name: &'static str, detail: impl Into<String>) -> Self {
        Error::Invalid {
            name,
            detail: detail.into(),
        }
    }

    pub(crate) fn shape(
        context: &'static str,
        expected: impl ToString,
        actual: impl ToString,
    ) -> Self {
        Error::Shape {
            context,
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    /// True for errors caused by the filesystem rather than by the inputs.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
