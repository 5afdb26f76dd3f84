//! Camera models.
//!
//! The fisheye model maps the incident angle of a ray to an image radius with
//! a quartic polynomial. Unprojection inverts that polynomial through a root
//! solver, cached in a [`ThetaLut`], and scales the unit ray by a Euclidean
//! distance (not a z-depth). The pinhole model is kept for rectification and
//! for the inverse-depth output convention.

mod fisheye;
mod lut;
mod pinhole;
mod rectify;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use fisheye::FisheyeIntrinsics;
pub use lut::{ThetaLut, DEFAULT_LUT_ENTRIES};
pub use pinhole::PinholeIntrinsics;
pub use rectify::{rectification_map, remap, CylindricalSpec, RectifyTarget, WarpGrid};

use crate::error::{Error, Result};

pub type Point3 = nalgebra::Vector3<f64>;

/// Continuous image coordinates; integer values are pixel centres.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pixel {
    pub u: f64,
    pub v: f64,
}

impl Pixel {
    pub const fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }
}

pub fn project_fisheye(x: &Point3, k: &FisheyeIntrinsics) -> Result<(Pixel, bool)> {
    k.project(x)
}

pub fn solve_theta(rho: f64, k: &FisheyeIntrinsics) -> Result<f64> {
    k.solve_theta(rho)
}

pub fn build_theta_lut(k: &FisheyeIntrinsics, n_entries: usize) -> Result<ThetaLut> {
    ThetaLut::build(k, n_entries)
}

/// Point at Euclidean distance `distance` along the viewing ray of `p`.
pub fn unproject_fisheye(p: Pixel, distance: f64, k: &FisheyeIntrinsics, lut: &ThetaLut) -> Result<Point3> {
    if !(distance > 0.0 && distance.is_finite()) {
        return Err(Error::InvalidDistance(distance));
    }
    let (radius, phi) = k.pixel_polar(p);
    let theta = lut.lookup(radius)?;
    if theta > k.theta_max {
        return Err(Error::RadiusOutOfRange { radius, max: k.rho_max() });
    }
    Ok(fisheye::ray_from_angles(theta, phi) * distance)
}

/// Fisheye intrinsics bundled with their lookup table and the unit viewing
/// ray of every pixel centre.
#[derive(Debug, Clone)]
pub struct FisheyeCamera {
    pub intrinsics: FisheyeIntrinsics,
    pub lut: Arc<ThetaLut>,
    rays: Vec<Point3>,
    in_fov: Vec<bool>,
}

impl FisheyeCamera {
    pub fn new(intrinsics: FisheyeIntrinsics) -> Result<Self> {
        Self::with_entries(intrinsics, DEFAULT_LUT_ENTRIES)
    }

    pub fn with_entries(intrinsics: FisheyeIntrinsics, n_entries: usize) -> Result<Self> {
        intrinsics.validate()?;
        let lut = ThetaLut::build(&intrinsics, n_entries)?;
        let (w, h) = (intrinsics.width, intrinsics.height);
        let mut rays = Vec::with_capacity(w * h);
        let mut in_fov = Vec::with_capacity(w * h);
        for v in 0..h {
            for u in 0..w {
                match unproject_fisheye(Pixel::new(u as f64, v as f64), 1.0, &intrinsics, &lut) {
                    Ok(ray) => {
                        rays.push(ray);
                        in_fov.push(true);
                    }
                    Err(_) => {
                        rays.push(Point3::zeros());
                        in_fov.push(false);
                    }
                }
            }
        }
        Ok(Self { intrinsics, lut: Arc::new(lut), rays, in_fov })
    }

    pub fn width(&self) -> usize {
        self.intrinsics.width
    }

    pub fn height(&self) -> usize {
        self.intrinsics.height
    }

    /// Unit ray of pixel index `i` (row-major), `None` outside calibration.
    #[inline]
    pub fn ray(&self, i: usize) -> Option<&Point3> {
        self.in_fov[i].then(|| &self.rays[i])
    }

    /// Row-major flags for pixel centres inside the calibrated field of view.
    pub fn fov_mask(&self) -> &[bool] {
        &self.in_fov
    }

    #[inline]
    pub fn in_fov(&self, u: usize, v: usize) -> bool {
        self.in_fov[v * self.intrinsics.width + u]
    }

    pub fn unproject(&self, p: Pixel, distance: f64) -> Result<Point3> {
        unproject_fisheye(p, distance, &self.intrinsics, &self.lut)
    }

    pub fn downsampled(&self) -> Result<Self> {
        Self::with_entries(self.intrinsics.downsampled(), self.lut.len())
    }
}

/// Sensor models understood by the renderer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum CameraModel {
    Fisheye(FisheyeIntrinsics),
    Pinhole(PinholeIntrinsics),
}

impl CameraModel {
    pub fn size(&self) -> (usize, usize) {
        match self {
            CameraModel::Fisheye(k) => (k.width, k.height),
            CameraModel::Pinhole(k) => (k.width, k.height),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputModel {
    Fisheye,
    Pinhole,
}

/// Affine map applied to a sigmoid output before conversion to metres.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmaRange {
    pub a: f64,
    pub b: f64,
}

impl SigmaRange {
    /// Coefficients bounding the output to `[0.1, 100]`.
    pub fn default_for(model: OutputModel) -> Self {
        match model {
            OutputModel::Fisheye => Self { a: 99.9, b: 0.1 },
            OutputModel::Pinhole => Self { a: 9.99, b: 0.01 },
        }
    }
}

/// Fisheye networks regress distance linearly (`a sigma + b`); pinhole
/// networks regress disparity, so depth is `1 / (a sigma + b)`.
pub fn sigma_to_distance(sigma: f64, range: SigmaRange, model: OutputModel) -> f64 {
    let s = range.a * sigma + range.b;
    match model {
        OutputModel::Fisheye => s,
        OutputModel::Pinhole => 1.0 / s,
    }
}

#[cfg(test)]
mod tests {
    use std::f64::consts::{FRAC_PI_4, PI, SQRT_2};

    use super::*;

    #[test]
    fn axis_pixel_unprojects_along_z() {
        let k = FisheyeIntrinsics::reference(64, 40);
        let lut = ThetaLut::build(&k, 4096).unwrap();
        let p = Pixel::new(k.principal[0], k.principal[1]);
        let x = unproject_fisheye(p, 5.0, &k, &lut).unwrap();
        assert!(x.x.abs() < 1e-15 && x.y.abs() < 1e-15 && (x.z - 5.0).abs() < 1e-15);
    }

    #[test]
    fn inverts_the_forty_five_degree_projection() {
        let k = FisheyeIntrinsics::new([1.0, 0.0, 0.0, 0.0], [1.0, 1.0], [0.0, 0.0], 4, 4, PI).unwrap();
        let lut = ThetaLut::build(&k, 4096).unwrap();
        let x = unproject_fisheye(Pixel::new(FRAC_PI_4, 0.0), SQRT_2, &k, &lut).unwrap();
        assert!((x - Point3::new(1.0, 0.0, 1.0)).norm() < 1e-12);
    }

    #[test]
    fn round_trip_and_errors() {
        let k = FisheyeIntrinsics::reference(1280, 800);
        let lut = ThetaLut::build(&k, 4096).unwrap();
        let x = Point3::new(1.0, 2.0, 3.0);
        let (p, valid) = k.project(&x).unwrap();
        assert!(valid);
        let back = unproject_fisheye(p, x.norm(), &k, &lut).unwrap();
        assert!((back - x).norm() / x.norm() < 1e-6);
        assert!(matches!(unproject_fisheye(p, 0.0, &k, &lut), Err(Error::InvalidDistance(_))));
        assert!(matches!(unproject_fisheye(p, -1.0, &k, &lut), Err(Error::InvalidDistance(_))));
        assert!(unproject_fisheye(Pixel::new(0.0, 0.0), 1.0, &k, &lut).is_err());
    }

    #[test]
    fn sigma_conversion() {
        let fish = SigmaRange::default_for(OutputModel::Fisheye);
        assert!((sigma_to_distance(0.0, fish, OutputModel::Fisheye) - 0.1).abs() < 1e-12);
        assert!((sigma_to_distance(1.0, fish, OutputModel::Fisheye) - 100.0).abs() < 1e-12);
        let pin = SigmaRange::default_for(OutputModel::Pinhole);
        assert!((sigma_to_distance(1.0, pin, OutputModel::Pinhole) - 0.1).abs() < 1e-12);
        assert!((sigma_to_distance(0.0, pin, OutputModel::Pinhole) - 100.0).abs() < 1e-12);
        let unit = SigmaRange { a: 1.0, b: 0.0 };
        assert_eq!(sigma_to_distance(0.5, unit, OutputModel::Fisheye), 0.5);
    }
}
