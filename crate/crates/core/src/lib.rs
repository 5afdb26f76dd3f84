//! Geometry and self-supervised objective for metric distance estimation on
//! raw fisheye video, with a direct per-pixel optimiser standing in for the
//! learned predictor.

pub mod camera;
pub mod error;
pub mod image;
pub mod io;
pub mod losses;
pub mod metrics;
pub mod optim;
pub mod parallel;
pub mod se3;
pub mod synth;
pub mod warp;

pub use error::{Error, Result};
