use serde::{Deserialize, Serialize};

use super::{FisheyeIntrinsics, Pixel, PinholeIntrinsics, Point3};
use crate::image::{Image, Mask};
use crate::warp::{bilinear_sample, FlowField};

/// Per-target-pixel source coordinates in the fisheye image.
pub type WarpGrid = FlowField;

/// Cylindrical viewport: columns are azimuth about the camera y axis
/// (`f_u` pixels per radian), rows are height on the unit cylinder
/// (`f_v` pixels per unit).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CylindricalSpec {
    pub f_u: f64,
    pub f_v: f64,
    pub principal: [f64; 2],
    pub width: usize,
    pub height: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RectifyTarget {
    Rectilinear(PinholeIntrinsics),
    Cylindrical(CylindricalSpec),
}

impl RectifyTarget {
    fn size(&self) -> (usize, usize) {
        match self {
            RectifyTarget::Rectilinear(k) => (k.width, k.height),
            RectifyTarget::Cylindrical(c) => (c.width, c.height),
        }
    }

    /// Viewing direction of a target pixel, `None` when it has no forward ray.
    fn ray(&self, u: f64, v: f64) -> Option<Point3> {
        match self {
            RectifyTarget::Rectilinear(k) => Some(Point3::new(
                (u - k.principal[0]) / k.focal[0],
                (v - k.principal[1]) / k.focal[1],
                1.0,
            )),
            RectifyTarget::Cylindrical(c) => {
                let azimuth = (u - c.principal[0]) / c.f_u;
                if azimuth.abs() >= std::f64::consts::PI {
                    return None;
                }
                Some(Point3::new(azimuth.sin(), (v - c.principal[1]) / c.f_v, azimuth.cos()))
            }
        }
    }
}

/// Source lookup grid that undistorts a fisheye image into `target`.
///
/// Target pixels whose ray lies beyond `theta_max`, outside the source image
/// or without a forward direction are flagged invalid.
pub fn rectification_map(k: &FisheyeIntrinsics, target: &RectifyTarget) -> WarpGrid {
    let (w, h) = target.size();
    let (sw, sh) = (k.width as f64 - 1.0, k.height as f64 - 1.0);
    let mut coords = Vec::with_capacity(w * h);
    let mut valid = Vec::with_capacity(w * h);
    for v in 0..h {
        for u in 0..w {
            let hit = target
                .ray(u as f64, v as f64)
                .and_then(|ray| k.project(&ray).ok())
                .filter(|(p, ok)| *ok && p.u <= sw && p.v <= sh);
            match hit {
                Some((p, _)) => {
                    coords.push(p);
                    valid.push(true);
                }
                None => {
                    coords.push(Pixel::new(f64::NAN, f64::NAN));
                    valid.push(false);
                }
            }
        }
    }
    FlowField::new(w, h, coords, valid)
}

/// Resamples `image` through `grid`; invalid target pixels are zero.
pub fn remap(image: &Image, grid: &WarpGrid) -> (Image, Mask) {
    (bilinear_sample(image, grid), grid.mask())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn principal_ray_maps_to_principal_point() {
        let k = FisheyeIntrinsics::reference(64, 40);
        let pin = PinholeIntrinsics::new([10.0, 10.0], [8.0, 6.0], 17, 13).unwrap();
        let grid = rectification_map(&k, &RectifyTarget::Rectilinear(pin));
        let p = grid.coord(8, 6).unwrap();
        assert!((p.u - k.principal[0]).abs() < 1e-12 && (p.v - k.principal[1]).abs() < 1e-12);

        let cyl = CylindricalSpec { f_u: 10.0, f_v: 10.0, principal: [8.0, 6.0], width: 17, height: 13 };
        let grid = rectification_map(&k, &RectifyTarget::Cylindrical(cyl));
        let p = grid.coord(8, 6).unwrap();
        assert!((p.u - k.principal[0]).abs() < 1e-12 && (p.v - k.principal[1]).abs() < 1e-12);
    }

    #[test]
    fn wide_cylinder_loses_rays_beyond_calibration() {
        let k = FisheyeIntrinsics::reference(64, 40);
        let cyl = CylindricalSpec { f_u: 5.0, f_v: 10.0, principal: [20.0, 6.0], width: 41, height: 13 };
        let grid = rectification_map(&k, &RectifyTarget::Cylindrical(cyl));
        // azimuth of +-4 rad is behind the camera
        assert!(grid.coord(0, 6).is_none());
        assert!(grid.coord(40, 6).is_none());
        assert!(grid.coord(20, 6).is_some());
    }
}
