use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("point has zero norm")]
    ZeroNorm,
    #[error("non-finite input: {0}")]
    NonFinite(&'static str),
    #[error("image radius {radius} outside calibrated range [0, {max}]")]
    RadiusOutOfRange { radius: f64, max: f64 },
    #[error("distance must be positive and finite, got {0}")]
    InvalidDistance(f64),
    #[error("degenerate baseline: translation norm {0} is too small to rescale")]
    DegenerateBaseline(f64),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("no supervised pixels")]
    NoSupervisedPixels,
    #[error("missing pose for frame pair ({0}, {1})")]
    MissingPose(usize, usize),
    #[error("warp is invalid at the requested pixel")]
    InvalidWarp,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
