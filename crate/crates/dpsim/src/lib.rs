//! Dual-pixel (DP) camera simulator.
//!
//! Traces real lens prescriptions through a parametric DP pixel model to
//! compute spatially varying left/right DP point-spread functions, fits an
//! MLP surrogate over the valid imaging frustum, and renders defocused DP
//! image pairs from RGBD input by per-pixel local convolution.

pub mod config;
pub mod cost_volume;
pub mod error;
pub mod mlp;
pub mod optics;
pub mod psf;
pub mod render;
pub mod sensor;

pub use error::{Error, Result};
