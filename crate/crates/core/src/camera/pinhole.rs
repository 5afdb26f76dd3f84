use serde::{Deserialize, Serialize};

use super::{Pixel, Point3};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PinholeIntrinsics {
    pub focal: [f64; 2],
    pub principal: [f64; 2],
    pub width: usize,
    pub height: usize,
}

impl PinholeIntrinsics {
    pub fn new(focal: [f64; 2], principal: [f64; 2], width: usize, height: usize) -> Result<Self> {
        if !(focal[0] > 0.0 && focal[1] > 0.0) || !focal.iter().chain(&principal).all(|v| v.is_finite()) {
            return Err(Error::InvalidIntrinsics(format!(
                "pinhole focal lengths must be positive and finite, got {focal:?}"
            )));
        }
        Ok(Self { focal, principal, width, height })
    }

    /// Projects `x`; the flag is false for points at or behind the image plane.
    pub fn project(&self, x: &Point3) -> (Pixel, bool) {
        if x.z.is_nan() || x.z <= 0.0 {
            return (Pixel::new(f64::NAN, f64::NAN), false);
        }
        let p = Pixel::new(
            self.focal[0] * x.x / x.z + self.principal[0],
            self.focal[1] * x.y / x.z + self.principal[1],
        );
        (p, p.u.is_finite() && p.v.is_finite())
    }

    /// Back-projects a pixel at the given depth (the z coordinate).
    pub fn unproject(&self, p: Pixel, depth: f64) -> Result<Point3> {
        if !(depth > 0.0 && depth.is_finite()) {
            return Err(Error::InvalidDistance(depth));
        }
        Ok(Point3::new(
            (p.u - self.principal[0]) / self.focal[0] * depth,
            (p.v - self.principal[1]) / self.focal[1] * depth,
            depth,
        ))
    }
}
