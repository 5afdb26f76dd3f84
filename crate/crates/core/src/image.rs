//! Dense row-major rasters: intensity images, distance maps and binary masks.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidArgument(format!("images have 1 or 3 channels, got {channels}")));
        }
        if data.len() != width * height * channels {
            return Err(Error::DimensionMismatch(format!(
                "{}x{}x{} image needs {} samples, got {}",
                width,
                height,
                channels,
                width * height * channels,
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !(v.is_finite() && (0.0..=1.0).contains(*v))) {
            return Err(Error::InvalidArgument(format!("image sample {bad} outside [0, 1]")));
        }
        Ok(Self { width, height, channels, data })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Self {
        Self { width, height, channels, data: vec![value.clamp(0.0, 1.0); width * height * channels] }
    }

    /// Builds a single-channel image from a per-pixel function, clamped to [0, 1].
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for v in 0..height {
            for u in 0..width {
                data.push(f(u, v).clamp(0.0, 1.0));
            }
        }
        Self { width, height, channels: 1, data }
    }

    pub(crate) fn from_raw(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), width * height * channels);
        Self { width, height, channels, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize, c: usize) -> f64 {
        self.data[(v * self.width + u) * self.channels + c]
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    /// Half resolution by 2x2 box averaging; an odd trailing row or column is dropped.
    pub fn downsample2(&self) -> Image {
        let (w, h, c) = (self.width / 2, self.height / 2, self.channels);
        let mut data = Vec::with_capacity(w * h * c);
        for v in 0..h {
            for u in 0..w {
                for ch in 0..c {
                    let s = self.get(2 * u, 2 * v, ch)
                        + self.get(2 * u + 1, 2 * v, ch)
                        + self.get(2 * u, 2 * v + 1, ch)
                        + self.get(2 * u + 1, 2 * v + 1, ch);
                    data.push(0.25 * s);
                }
            }
        }
        Image::from_raw(w, h, c, data)
    }
}

/// Per-pixel Euclidean distance in metres.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMap {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl DistanceMap {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{width}x{height} distance map needs {} entries, got {}",
                width * height,
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|d| !(d.is_finite() && **d > 0.0)) {
            return Err(Error::InvalidDistance(*bad));
        }
        Ok(Self { width, height, data })
    }

    pub fn constant(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub(crate) fn from_raw(width: usize, height: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), width * height);
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.data[v * self.width + u]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.width, self.height, self.data.iter().map(|&d| f(d)).collect())
    }

    pub fn downsample2(&self) -> DistanceMap {
        let (w, h) = (self.width / 2, self.height / 2);
        let mut data = Vec::with_capacity(w * h);
        for v in 0..h {
            for u in 0..w {
                let s = self.get(2 * u, 2 * v)
                    + self.get(2 * u + 1, 2 * v)
                    + self.get(2 * u, 2 * v + 1)
                    + self.get(2 * u + 1, 2 * v + 1);
                data.push(0.25 * s);
            }
        }
        DistanceMap::from_raw(w, h, data)
    }

    /// `levels` maps starting with `self`, each half the size of the previous.
    pub fn pyramid(&self, levels: usize) -> Vec<DistanceMap> {
        let mut out = vec![self.clone()];
        while out.len() < levels {
            let next = out.last().unwrap().downsample2();
            out.push(next);
        }
        out
    }
}

/// Binary per-pixel weight.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{width}x{height} mask needs {} entries, got {}",
                width * height,
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: bool) -> Self {
        Self { width, height, data: vec![value; width * height] }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> bool {
        self.data[v * self.width + u]
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn fraction(&self) -> f64 {
        if self.data.is_empty() {
            0.0
        } else {
            self.count() as f64 / self.data.len() as f64
        }
    }

    pub fn and(&self, other: &Mask) -> Result<Mask> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::DimensionMismatch("mask sizes differ".into()));
        }
        Ok(Mask {
            width: self.width,
            height: self.height,
            data: self.data.iter().zip(&other.data).map(|(a, b)| *a && *b).collect(),
        })
    }

    /// Mask as a grayscale image (0 or 1).
    pub fn to_image(&self) -> Image {
        Image::from_raw(
            self.width,
            self.height,
            1,
            self.data.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        )
    }
}
