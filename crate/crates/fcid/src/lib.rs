//! Detection of fake colorized images.
//!
//! Colorized images carry statistical traces in four channels: hue,
//! saturation, and the patch-based dark and bright channels. This crate
//! builds two detectors on those traces:
//!
//! - a histogram detector (`hist`): per-channel class histograms, the most
//!   distinctive bin and total variation per channel, an 8-dimensional
//!   feature per image;
//! - a feature-encoding detector (`fe`): per-pixel 4-D samples modeled by a
//!   diagonal Gaussian mixture and encoded per image into Fisher vectors.
//!
//! Both feed a from-scratch RBF soft-margin SVM with probability
//! calibration and a tuned decision threshold. The `eval` module carries
//! the evaluation protocol (HTER, ROC/AUC, cross-validation, grid search,
//! threshold sweep); `pipeline` ties everything together over dataset
//! manifests and persisted models; `synth` renders seeded synthetic
//! natural/colorized image pairs for end-to-end experiments.

// Indexed loops mirror the component/dimension math throughout the
// numeric kernels.
#![allow(clippy::needless_range_loop)]

pub mod channels;
pub mod error;
pub mod eval;
pub mod fisher;
pub mod gmm;
pub mod hist;
pub mod manifest;
pub mod model;
pub mod pipeline;
pub mod raster;
pub mod svm;
pub mod synth;

pub use error::{Error, Result};
