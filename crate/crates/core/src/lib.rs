//! Chronochrome anomalous change detection.
//!
//! A regressor predicts the second acquisition of a scene from the first;
//! each pixel is then scored by its Cook's distance, either on the raw bands
//! ([`pipeline::Method::Cook`]) or on random Fourier features approximating a
//! Gaussian kernel ([`pipeline::Method::RCook`]).
//!
//! Data-parallel stages run on rayon when the `parallel` feature is enabled
//! (the default). Results are bitwise identical with and without it.

pub mod cook;
pub mod error;
pub mod eval;
pub mod exec;
pub mod linalg;
pub mod pipeline;
pub mod raster;
pub mod regression;
pub mod rff;
pub mod seed;
pub mod synth;
pub mod tune;

pub use error::{Error, Result};
pub use exec::Execution;
