//! Inverse warping: distance map -> point cloud -> rigid transform ->
//! fisheye reprojection -> bilinear reconstruction of the target view.
//!
//! A reprojected pixel is valid only if its incident angle is calibrated, it
//! lands inside the source image, and every bilinear neighbour carrying
//! weight lies inside the source field of view. The validity flags form the
//! ego mask; nothing is clamped.

use crate::camera::{FisheyeCamera, FisheyeIntrinsics, Pixel, Point3, ThetaLut};
use crate::error::{Error, Result};
use crate::image::{DistanceMap, Image, Mask};
use crate::parallel::map_range;
use crate::se3::Pose;

/// Dense per-pixel source coordinates with validity.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    width: usize,
    height: usize,
    coords: Vec<Pixel>,
    valid: Vec<bool>,
}

impl FlowField {
    pub fn new(width: usize, height: usize, coords: Vec<Pixel>, valid: Vec<bool>) -> Self {
        assert_eq!(coords.len(), width * height);
        assert_eq!(valid.len(), width * height);
        Self { width, height, coords, valid }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn coords(&self) -> &[Pixel] {
        &self.coords
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    pub fn coord(&self, u: usize, v: usize) -> Option<Pixel> {
        let i = v * self.width + u;
        self.valid[i].then(|| self.coords[i])
    }

    pub fn mask(&self) -> Mask {
        Mask::new(self.width, self.height, self.valid.clone()).expect("sizes agree")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub width: usize,
    pub height: usize,
    pub points: Vec<Point3>,
    /// False for pixels outside the calibrated field of view.
    pub valid: Vec<bool>,
}

/// Bilinear footprint of a continuous coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Cell {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
    pub a: f64,
    pub b: f64,
}

impl Cell {
    /// `None` when any neighbour would fall outside `[0, w-1] x [0, h-1]`.
    #[inline]
    pub fn locate(u: f64, v: f64, width: usize, height: usize) -> Option<Cell> {
        let (wm, hm) = (width as f64 - 1.0, height as f64 - 1.0);
        if !(u >= 0.0 && v >= 0.0 && u <= wm && v <= hm) {
            return None;
        }
        let x0 = (u.floor() as usize).min(width.saturating_sub(2));
        let y0 = (v.floor() as usize).min(height.saturating_sub(2));
        let x1 = (x0 + 1).min(width - 1);
        let y1 = (y0 + 1).min(height - 1);
        Some(Cell { x0, y0, x1, y1, a: u - x0 as f64, b: v - y0 as f64 })
    }

    /// Neighbour indices with their weights, row-major `[00, 10, 01, 11]`.
    #[inline]
    pub fn taps(&self, width: usize) -> [(usize, f64); 4] {
        let (a, b) = (self.a, self.b);
        [
            (self.y0 * width + self.x0, (1.0 - a) * (1.0 - b)),
            (self.y0 * width + self.x1, a * (1.0 - b)),
            (self.y1 * width + self.x0, (1.0 - a) * b),
            (self.y1 * width + self.x1, a * b),
        ]
    }

    /// Interpolated value and its derivatives along u and v.
    #[inline]
    pub fn sample(&self, width: usize, f: impl Fn(usize) -> f64) -> (f64, f64, f64) {
        let (a, b) = (self.a, self.b);
        let v00 = f(self.y0 * width + self.x0);
        let v10 = f(self.y0 * width + self.x1);
        let v01 = f(self.y1 * width + self.x0);
        let v11 = f(self.y1 * width + self.x1);
        let value = (1.0 - a) * (1.0 - b) * v00 + a * (1.0 - b) * v10 + (1.0 - a) * b * v01 + a * b * v11;
        let du = (1.0 - b) * (v10 - v00) + b * (v11 - v01);
        let dv = (1.0 - a) * (v01 - v00) + a * (v11 - v10);
        (value, du, dv)
    }
}

/// Projection of a transformed point into the source view, with the cell
/// used to read it. `None` marks an invalid warp.
#[inline]
pub(crate) fn locate_in_source(k: &FisheyeIntrinsics, rho_max: f64, y: &Point3) -> Option<(Pixel, f64, Cell)> {
    if !y.iter().all(|c| c.is_finite()) || y.norm_squared() == 0.0 {
        return None;
    }
    let (p, theta) = k.project_unchecked(y);
    if !(theta <= k.theta_max && k.contains(p)) {
        return None;
    }
    let cell = Cell::locate(p.u, p.v, k.width, k.height)?;
    cell_in_fov(k, rho_max, &cell).then_some((p, theta, cell))
}

#[inline]
pub(crate) fn cell_in_fov(k: &FisheyeIntrinsics, rho_max: f64, cell: &Cell) -> bool {
    let inside = |x: usize, y: usize| k.pixel_polar(Pixel::new(x as f64, y as f64)).0 <= rho_max;
    inside(cell.x0, cell.y0)
        && (cell.a == 0.0 || inside(cell.x1, cell.y0))
        && (cell.b == 0.0 || inside(cell.x0, cell.y1))
        && (cell.a == 0.0 || cell.b == 0.0 || inside(cell.x1, cell.y1))
}

pub(crate) fn fov_radius(k: &FisheyeIntrinsics, lut: &ThetaLut) -> f64 {
    lut.max_radius().min(k.rho_max())
}

pub fn unproject_map(d: &DistanceMap, k: &FisheyeIntrinsics, lut: &ThetaLut) -> Result<PointCloud> {
    check_size(d.width(), d.height(), k)?;
    let w = d.width();
    let samples = map_range(w * d.height(), |i| {
        let p = Pixel::new((i % w) as f64, (i / w) as f64);
        match crate::camera::unproject_fisheye(p, d.data()[i], k, lut) {
            Ok(x) => Ok(Some(x)),
            Err(Error::RadiusOutOfRange { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    });
    let mut points = Vec::with_capacity(samples.len());
    let mut valid = Vec::with_capacity(samples.len());
    for s in samples {
        match s? {
            Some(x) => {
                points.push(x);
                valid.push(true);
            }
            None => {
                points.push(Point3::zeros());
                valid.push(false);
            }
        }
    }
    Ok(PointCloud { width: w, height: d.height(), points, valid })
}

/// Source coordinates of every cloud point after applying `pose`.
///
/// The identity pose maps each pixel onto itself exactly.
pub fn reproject(cloud: &PointCloud, pose: &Pose, k: &FisheyeIntrinsics, lut: &ThetaLut) -> FlowField {
    let w = cloud.width;
    let rho_max = fov_radius(k, lut);
    let identity = pose.is_identity() && w == k.width && cloud.height == k.height;
    let out = map_range(w * cloud.height, |i| {
        if !cloud.valid[i] {
            return (Pixel::new(f64::NAN, f64::NAN), false);
        }
        if identity {
            let p = Pixel::new((i % w) as f64, (i / w) as f64);
            let ok = Cell::locate(p.u, p.v, k.width, k.height).is_some_and(|c| cell_in_fov(k, rho_max, &c));
            return (p, ok);
        }
        let y = pose.apply(&cloud.points[i]);
        match locate_in_source(k, rho_max, &y) {
            Some((p, _, _)) => (p, true),
            None => (Pixel::new(f64::NAN, f64::NAN), false),
        }
    });
    let (coords, valid) = out.into_iter().unzip();
    FlowField::new(w, cloud.height, coords, valid)
}

/// Bilinear reconstruction; invalid flow pixels are zero.
pub fn bilinear_sample(src: &Image, flow: &FlowField) -> Image {
    let (w, c) = (flow.width, src.channels());
    let pixels = map_range(flow.width * flow.height, |i| {
        let mut out = [0.0; 3];
        if flow.valid[i] {
            let p = flow.coords[i];
            if let Some(cell) = Cell::locate(p.u, p.v, src.width(), src.height()) {
                for (ch, o) in out.iter_mut().enumerate().take(c) {
                    *o = cell.sample(src.width(), |j| src.data()[j * c + ch]).0;
                }
            }
        }
        out
    });
    let mut data = Vec::with_capacity(w * flow.height * c);
    for px in pixels {
        data.extend_from_slice(&px[..c]);
    }
    Image::from_raw(w, flow.height, c, data.into_iter().map(|x| x.clamp(0.0, 1.0)).collect())
}

/// Reconstructs the target view from `source` and returns it with the ego mask.
pub fn synthesize_view(
    target_distance: &DistanceMap,
    source: &Image,
    pose: &Pose,
    camera: &FisheyeCamera,
) -> Result<(Image, Mask)> {
    let k = &camera.intrinsics;
    check_size(source.width(), source.height(), k)?;
    let cloud = unproject_map(target_distance, k, &camera.lut)?;
    let flow = reproject(&cloud, pose, k, &camera.lut);
    Ok((bilinear_sample(source, &flow), flow.mask()))
}

/// Derivative of the reprojected coordinates with respect to the distance
/// assigned to `p`. Unprojection is linear in distance, so this is
/// `J_proj(T X) * R * ray(p)`.
pub fn warp_jacobian(p: Pixel, distance: f64, pose: &Pose, k: &FisheyeIntrinsics, lut: &ThetaLut) -> Result<[f64; 2]> {
    let x = crate::camera::unproject_fisheye(p, distance, k, lut)?;
    let ray = x / distance;
    let y = pose.apply(&x);
    let (_, valid, jac) = k.project_with_jacobian(&y)?;
    if !valid {
        return Err(Error::InvalidWarp);
    }
    let d = jac * (pose.rotation() * ray);
    Ok([d[0], d[1]])
}

/// Warp of a whole target distance map into one source view, with the
/// derivatives needed by the objective. Entries are `None` where invalid.
pub(crate) struct DenseWarp {
    pub cells: Vec<Option<Cell>>,
    /// d(source u, v) / d(target distance).
    pub flow_grad: Vec<[f64; 2]>,
    /// Distance of the transformed point from the source camera.
    pub range: Vec<f64>,
    pub range_grad: Vec<f64>,
}

pub(crate) fn dense_warp(camera: &FisheyeCamera, d: &[f64], pose: &Pose) -> DenseWarp {
    let k = &camera.intrinsics;
    let rho_max = fov_radius(k, &camera.lut);
    let w = k.width;
    let identity = pose.is_identity();
    let out = map_range(d.len(), |i| {
        let ray = camera.ray(i)?;
        if identity {
            let cell = Cell::locate((i % w) as f64, (i / w) as f64, k.width, k.height)?;
            return cell_in_fov(k, rho_max, &cell).then_some((cell, [0.0, 0.0], d[i], 1.0));
        }
        let y = pose.apply(&(ray * d[i]));
        let (_, theta, cell) = locate_in_source(k, rho_max, &y)?;
        let dy = pose.rotation() * ray;
        let j = k.projection_jacobian(&y, theta) * dy;
        let range = y.norm();
        Some((cell, [j[0], j[1]], range, y.dot(&dy) / range))
    });
    let n = out.len();
    let mut warp = DenseWarp {
        cells: Vec::with_capacity(n),
        flow_grad: Vec::with_capacity(n),
        range: Vec::with_capacity(n),
        range_grad: Vec::with_capacity(n),
    };
    for o in out {
        let (cell, fg, r, rg) = match o {
            Some((c, fg, r, rg)) => (Some(c), fg, r, rg),
            None => (None, [0.0, 0.0], 0.0, 0.0),
        };
        warp.cells.push(cell);
        warp.flow_grad.push(fg);
        warp.range.push(r);
        warp.range_grad.push(rg);
    }
    warp
}

fn check_size(width: usize, height: usize, k: &FisheyeIntrinsics) -> Result<()> {
    if width != k.width || height != k.height {
        return Err(Error::DimensionMismatch(format!(
            "{width}x{height} raster for a {}x{} camera",
            k.width, k.height
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(w: usize, h: usize) -> Image {
        Image::from_fn(w, h, |u, _| u as f64 / (w - 1) as f64)
    }

    #[test]
    fn identity_flow_reproduces_source() {
        let img = Image::from_fn(5, 4, |u, v| ((u * 7 + v * 3) % 11) as f64 / 10.0);
        let coords = (0..20).map(|i| Pixel::new((i % 5) as f64, (i / 5) as f64)).collect();
        let flow = FlowField::new(5, 4, coords, vec![true; 20]);
        assert_eq!(bilinear_sample(&img, &flow), img);
    }

    #[test]
    fn half_pixel_shift_on_ramp_gives_midpoint() {
        let img = ramp(5, 3);
        let flow = FlowField::new(1, 1, vec![Pixel::new(1.5, 1.0)], vec![true]);
        let out = bilinear_sample(&img, &flow);
        assert!((out.get(0, 0, 0) - 0.375).abs() < 1e-15);
    }

    #[test]
    fn constant_image_is_flow_invariant() {
        let img = Image::filled(6, 6, 3, 0.3);
        let coords = vec![Pixel::new(0.2, 4.9), Pixel::new(5.0, 5.0), Pixel::new(2.7, 0.1), Pixel::new(9.0, 0.0)];
        let flow = FlowField::new(2, 2, coords, vec![true, true, true, false]);
        let out = bilinear_sample(&img, &flow);
        for i in 0..3 {
            for c in 0..3 {
                assert!((out.data()[i * 3 + c] - 0.3).abs() < 1e-15);
            }
        }
        assert_eq!(out.data()[9], 0.0);
    }

    #[test]
    fn cells_reject_out_of_bounds() {
        assert!(Cell::locate(-0.1, 0.0, 4, 4).is_none());
        assert!(Cell::locate(3.0, 3.0, 4, 4).is_some());
        assert!(Cell::locate(3.0001, 0.0, 4, 4).is_none());
        let c = Cell::locate(3.0, 2.5, 4, 4).unwrap();
        assert_eq!((c.x0, c.x1, c.a), (2, 3, 1.0));
    }

    #[test]
    fn unproject_map_preserves_distance() {
        let k = FisheyeIntrinsics { principal: [16.0, 10.0], ..FisheyeIntrinsics::reference(32, 20) };
        let centre = 10 * 32 + 16;
        let mut data = vec![1.0; 32 * 20];
        data[centre] = 7.0;
        let d = DistanceMap::new(32, 20, data).unwrap();
        let lut = ThetaLut::build(&k, 4096).unwrap();
        let cloud = unproject_map(&d, &k, &lut).unwrap();
        assert!((cloud.points[centre] - Point3::new(0.0, 0.0, 7.0)).norm() < 1e-12);
        for (x, (ok, dist)) in cloud.points.iter().zip(cloud.valid.iter().zip(d.data())) {
            if *ok {
                assert!((x.norm() - dist).abs() < 1e-12);
            }
        }
        assert!(cloud.valid.iter().any(|v| !v), "corners lie outside the image circle");
    }

    #[test]
    fn identity_pose_flow_is_the_pixel_grid() {
        let cam = FisheyeCamera::new(FisheyeIntrinsics::reference(32, 20)).unwrap();
        let d = DistanceMap::constant(32, 20, 3.0).unwrap();
        let cloud = unproject_map(&d, &cam.intrinsics, &cam.lut).unwrap();
        let flow = reproject(&cloud, &Pose::identity(), &cam.intrinsics, &cam.lut);
        for v in 0..20 {
            for u in 0..32 {
                if let Some(p) = flow.coord(u, v) {
                    assert_eq!((p.u, p.v), (u as f64, v as f64));
                }
            }
        }
    }

    #[test]
    fn point_pushed_behind_the_camera_is_invalid() {
        let cam = FisheyeCamera::new(FisheyeIntrinsics::reference(32, 20)).unwrap();
        let d = DistanceMap::constant(32, 20, 1.0).unwrap();
        let cloud = unproject_map(&d, &cam.intrinsics, &cam.lut).unwrap();
        let flow = reproject(&cloud, &Pose::from_translation(Point3::new(0.0, 0.0, -10.0)), &cam.intrinsics, &cam.lut);
        let i = 10 * 32 + 16;
        assert!(!flow.valid()[i]);
    }

    #[test]
    fn jacobian_vanishes_for_identity_and_axial_motion() {
        let k = FisheyeIntrinsics::reference(64, 40);
        let lut = ThetaLut::build(&k, 4096).unwrap();
        let p = Pixel::new(10.0, 12.0);
        let j = warp_jacobian(p, 3.0, &Pose::identity(), &k, &lut).unwrap();
        assert!(j[0].abs() < 1e-12 && j[1].abs() < 1e-12);
        let c = Pixel::new(k.principal[0], k.principal[1]);
        let j = warp_jacobian(c, 3.0, &Pose::from_translation(Point3::new(0.0, 0.0, 0.5)), &k, &lut).unwrap();
        assert!(j[0].abs() < 1e-12 && j[1].abs() < 1e-12);
    }
}
