use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::Matrix2x3;
use serde::{Deserialize, Serialize};

use super::{Pixel, Point3};
use crate::error::{Error, Result};

/// Samples used to check that the radial polynomial is strictly increasing.
const MONOTONE_SAMPLES: usize = 2048;

/// Quartic radial fisheye model mapping incident angle to image radius.
///
/// `rho(theta) = k1 theta + k2 theta^2 + k3 theta^3 + k4 theta^4` gives the
/// radius in pixels; `aspect` rescales the two image axes and `principal`
/// is the optical centre. Integer pixel coordinates are pixel centres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FisheyeIntrinsics {
    pub k: [f64; 4],
    pub aspect: [f64; 2],
    pub principal: [f64; 2],
    pub width: usize,
    pub height: usize,
    pub theta_max: f64,
}

impl FisheyeIntrinsics {
    pub fn new(
        k: [f64; 4],
        aspect: [f64; 2],
        principal: [f64; 2],
        width: usize,
        height: usize,
        theta_max: f64,
    ) -> Result<Self> {
        let intrinsics = Self {
            k,
            aspect,
            principal,
            width,
            height,
            theta_max,
        };
        intrinsics.validate()?;
        Ok(intrinsics)
    }

    /// Harness camera: coefficients tuned for a 1280 px wide sensor,
    /// rescaled to `width`, principal point at the image centre.
    pub fn reference(width: usize, height: usize) -> Self {
        let s = width as f64 / 1280.0;
        Self::new(
            [320.0 * s, -15.0 * s, 0.8 * s, -0.02 * s],
            [1.0, 1.0],
            [(width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0],
            width,
            height,
            1.745,
        )
        .expect("reference intrinsics are valid")
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self.k.iter().chain(&self.aspect).chain(&self.principal).all(|v| v.is_finite())
            && self.theta_max.is_finite();
        if !finite {
            return Err(Error::InvalidIntrinsics("non-finite parameter".into()));
        }
        if self.k[0] <= 0.0 {
            return Err(Error::InvalidIntrinsics(format!("k1 must be positive, got {}", self.k[0])));
        }
        if !(self.theta_max > 0.0 && self.theta_max <= PI) {
            return Err(Error::InvalidIntrinsics(format!(
                "theta_max must lie in (0, pi], got {}",
                self.theta_max
            )));
        }
        if self.aspect[0] <= 0.0 || self.aspect[1] <= 0.0 {
            return Err(Error::InvalidIntrinsics("aspect ratios must be positive".into()));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidIntrinsics("image size must be non-zero".into()));
        }
        for i in 0..=MONOTONE_SAMPLES {
            let theta = self.theta_max * i as f64 / MONOTONE_SAMPLES as f64;
            let slope = self.rho_derivative(theta);
            if slope <= 0.0 {
                return Err(Error::InvalidIntrinsics(format!(
                    "radial polynomial is not increasing at theta = {theta:.6} (slope {slope:.3e})"
                )));
            }
        }
        Ok(())
    }

    #[inline]
    pub fn rho(&self, theta: f64) -> f64 {
        let [k1, k2, k3, k4] = self.k;
        theta * (k1 + theta * (k2 + theta * (k3 + theta * k4)))
    }

    #[inline]
    pub fn rho_derivative(&self, theta: f64) -> f64 {
        let [k1, k2, k3, k4] = self.k;
        k1 + theta * (2.0 * k2 + theta * (3.0 * k3 + theta * 4.0 * k4))
    }

    /// Largest calibrated image radius, `rho(theta_max)`.
    pub fn rho_max(&self) -> f64 {
        self.rho(self.theta_max)
    }

    /// Radius (in aspect-normalised pixels) of the farthest image corner.
    pub fn diagonal_radius(&self) -> f64 {
        let xs = [-0.5, self.width as f64 - 0.5];
        let ys = [-0.5, self.height as f64 - 0.5];
        let mut best = 0.0f64;
        for x in xs {
            for y in ys {
                let dx = (x - self.principal[0]) / self.aspect[0];
                let dy = (y - self.principal[1]) / self.aspect[1];
                best = best.max(dx.hypot(dy));
            }
        }
        best
    }

    /// Aspect-normalised radius of a pixel and its polar angle.
    #[inline]
    pub fn pixel_polar(&self, p: Pixel) -> (f64, f64) {
        let xi = (p.u - self.principal[0]) / self.aspect[0];
        let yi = (p.v - self.principal[1]) / self.aspect[1];
        (xi.hypot(yi), yi.atan2(xi))
    }

    pub fn contains(&self, p: Pixel) -> bool {
        p.u >= 0.0 && p.v >= 0.0 && p.u < self.width as f64 && p.v < self.height as f64
    }

    /// Invert `rho` on `[0, theta_max]`.
    ///
    /// Bisection narrows the bracket to 1e-6 rad, then Newton steps polish
    /// the root; every Newton iterate is kept inside the bracket.
    pub fn solve_theta(&self, rho: f64) -> Result<f64> {
        let rho_max = self.rho_max();
        if !rho.is_finite() || rho < 0.0 || rho > rho_max {
            return Err(Error::RadiusOutOfRange { radius: rho, max: rho_max });
        }
        if rho == 0.0 {
            return Ok(0.0);
        }
        let (mut lo, mut hi) = (0.0, self.theta_max);
        while hi - lo > 1e-6 {
            let mid = 0.5 * (lo + hi);
            if self.rho(mid) < rho {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let mut theta = 0.5 * (lo + hi);
        for _ in 0..5 {
            let step = (self.rho(theta) - rho) / self.rho_derivative(theta);
            let next = (theta - step).clamp(lo, hi);
            let moved = (next - theta).abs();
            theta = next;
            if moved < 1e-15 {
                break;
            }
        }
        Ok(theta)
    }

    /// Forward projection. The flag is true when the incident angle is
    /// within calibration and the pixel falls inside `[0, w) x [0, h)`.
    pub fn project(&self, x: &Point3) -> Result<(Pixel, bool)> {
        check_point(x)?;
        let (p, theta) = self.project_unchecked(x);
        Ok((p, theta <= self.theta_max && self.contains(p)))
    }

    #[inline]
    pub(crate) fn project_unchecked(&self, x: &Point3) -> (Pixel, f64) {
        let rc = x.x.hypot(x.y);
        let phi = x.y.atan2(x.x);
        let theta = FRAC_PI_2 - x.z.atan2(rc);
        let rho = self.rho(theta);
        let p = Pixel::new(
            rho * phi.cos() * self.aspect[0] + self.principal[0],
            rho * phi.sin() * self.aspect[1] + self.principal[1],
        );
        (p, theta)
    }

    /// Projection together with the 2x3 Jacobian of the pixel with respect
    /// to the camera-frame point.
    pub fn project_with_jacobian(&self, x: &Point3) -> Result<(Pixel, bool, Matrix2x3<f64>)> {
        check_point(x)?;
        let (p, theta) = self.project_unchecked(x);
        let valid = theta <= self.theta_max && self.contains(p);
        Ok((p, valid, self.projection_jacobian(x, theta)))
    }

    pub(crate) fn projection_jacobian(&self, x: &Point3, theta: f64) -> Matrix2x3<f64> {
        let [ax, ay] = self.aspect;
        let rc = x.x.hypot(x.y);
        let n2 = rc * rc + x.z * x.z;
        if rc <= 1e-12 * n2.sqrt() {
            // On the optical axis u - cx -> ax k1 x / |z| (and likewise for v).
            if x.z > 0.0 {
                let s = self.k[0] / x.z;
                return Matrix2x3::new(ax * s, 0.0, 0.0, 0.0, ay * s, 0.0);
            }
            return Matrix2x3::zeros();
        }
        let rho = self.rho(theta);
        let drho = self.rho_derivative(theta);
        // s = rho(theta) / rc, u = cx + ax s x, v = cy + ay s y.
        let s = rho / rc;
        let a = drho * x.z / (rc * rc * n2) - rho / (rc * rc * rc);
        let ds_dx = a * x.x;
        let ds_dy = a * x.y;
        let ds_dz = -drho / n2;
        Matrix2x3::new(
            ax * (s + x.x * ds_dx),
            ax * x.x * ds_dy,
            ax * x.x * ds_dz,
            ay * x.y * ds_dx,
            ay * (s + x.y * ds_dy),
            ay * x.y * ds_dz,
        )
    }

    /// Unit viewing ray of a pixel using a root solve instead of a table.
    pub fn ray_exact(&self, p: Pixel) -> Result<Point3> {
        let (radius, phi) = self.pixel_polar(p);
        let theta = self.solve_theta(radius)?;
        Ok(ray_from_angles(theta, phi))
    }

    /// Intrinsics of the image obtained by 2x2 averaging.
    pub fn downsampled(&self) -> Self {
        let mut out = *self;
        out.k = self.k.map(|k| k / 2.0);
        out.principal = self.principal.map(|c| (c - 0.5) / 2.0);
        out.width = self.width / 2;
        out.height = self.height / 2;
        out
    }
}

#[inline]
pub(crate) fn ray_from_angles(theta: f64, phi: f64) -> Point3 {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    Point3::new(st * cp, st * sp, ct)
}

fn check_point(x: &Point3) -> Result<()> {
    if !x.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("camera point"));
    }
    if x.norm_squared() == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_k() -> FisheyeIntrinsics {
        FisheyeIntrinsics::new([1.0, 0.0, 0.0, 0.0], [1.0, 1.0], [0.0, 0.0], 10, 10, PI).unwrap()
    }

    #[test]
    fn optical_axis_projects_to_principal_point() {
        let (p, valid) = unit_k().project(&Point3::new(0.0, 0.0, 1.0)).unwrap();
        assert_eq!((p.u, p.v), (0.0, 0.0));
        assert!(valid);
    }

    #[test]
    fn forty_five_degree_rays() {
        let k = unit_k();
        let (p, _) = k.project(&Point3::new(1.0, 0.0, 1.0)).unwrap();
        assert!((p.u - PI / 4.0).abs() < 1e-15 && p.v.abs() < 1e-15);
        let (p, _) = k.project(&Point3::new(0.0, 1.0, 1.0)).unwrap();
        assert!(p.u.abs() < 1e-15 && (p.v - PI / 4.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_points() {
        let k = unit_k();
        assert!(matches!(k.project(&Point3::zeros()), Err(Error::ZeroNorm)));
        assert!(matches!(
            k.project(&Point3::new(f64::NAN, 0.0, 1.0)),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn solve_theta_examples() {
        let k = unit_k();
        assert_eq!(k.solve_theta(0.0).unwrap(), 0.0);
        assert!((k.solve_theta(0.5).unwrap() - 0.5).abs() < 1e-12);

        let k = FisheyeIntrinsics::new([1.0, 0.1, 0.0, 0.0], [1.0, 1.0], [0.0, 0.0], 4, 4, 1.5).unwrap();
        let rho = k.rho(0.6);
        assert!((rho - 0.636).abs() < 1e-12);
        assert!((k.solve_theta(rho).unwrap() - 0.6).abs() < 1e-9);
        assert!(k.solve_theta(-0.1).is_err());
        assert!(k.solve_theta(k.rho_max() + 1e-6).is_err());
    }

    #[test]
    fn construction_rejects_non_monotone_polynomials() {
        // slope 1 - 2 theta turns negative past 0.5 rad
        let err = FisheyeIntrinsics::new([1.0, -1.0, 0.0, 0.0], [1.0, 1.0], [0.0, 0.0], 4, 4, 1.0);
        assert!(matches!(err, Err(Error::InvalidIntrinsics(_))));
        assert!(FisheyeIntrinsics::new([0.0, 1.0, 0.0, 0.0], [1.0, 1.0], [0.0, 0.0], 4, 4, 1.0).is_err());
        assert!(FisheyeIntrinsics::new([1.0, 0.0, 0.0, 0.0], [1.0, 1.0], [0.0, 0.0], 4, 4, 4.0).is_err());
        assert!(FisheyeIntrinsics::new([1.0, 0.0, 0.0, 0.0], [0.0, 1.0], [0.0, 0.0], 4, 4, 1.0).is_err());
    }

    #[test]
    fn reference_camera_covers_more_than_a_hemisphere() {
        let k = FisheyeIntrinsics::reference(64, 40);
        assert!(k.theta_max > FRAC_PI_2);
        assert!(k.rho_max() > 20.0);
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let k = FisheyeIntrinsics::reference(64, 40);
        for x in [
            Point3::new(0.3, -0.2, 1.0),
            Point3::new(2.0, 1.0, -0.3),
            Point3::new(1e-14, 0.0, 2.0),
        ] {
            let (_, _, jac) = k.project_with_jacobian(&x).unwrap();
            for c in 0..3 {
                let h = 1e-6;
                let mut xp = x;
                let mut xm = x;
                xp[c] += h;
                xm[c] -= h;
                let (pp, _) = k.project_unchecked(&xp);
                let (pm, _) = k.project_unchecked(&xm);
                let du = (pp.u - pm.u) / (2.0 * h);
                let dv = (pp.v - pm.v) / (2.0 * h);
                assert!((du - jac[(0, c)]).abs() < 1e-5 * (1.0 + du.abs()), "du/dx{c}");
                assert!((dv - jac[(1, c)]).abs() < 1e-5 * (1.0 + dv.abs()), "dv/dx{c}");
            }
        }
    }
}
