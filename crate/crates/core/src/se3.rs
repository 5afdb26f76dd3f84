//! Rigid transforms and odometry-based scale normalisation.

use std::fmt;
use std::str::FromStr;

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::camera::Point3;
use crate::error::{Error, Result};

/// Translations shorter than this cannot be rescaled to a metric baseline.
pub const MIN_BASELINE: f64 = 1e-6;

/// Rigid transform `X' = R X + t`. The rotation is given by intrinsic
/// X-Y-Z Euler angles, `R = Rx(roll) Ry(pitch) Rz(yaw)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    euler: [f64; 3],
    rotation: Matrix3<f64>,
    translation: Point3,
}

impl Pose {
    pub fn identity() -> Self {
        Self { euler: [0.0; 3], rotation: Matrix3::identity(), translation: Point3::zeros() }
    }

    pub fn new(roll: f64, pitch: f64, yaw: f64, translation: Point3) -> Self {
        Self { euler: [roll, pitch, yaw], rotation: euler_to_matrix(roll, pitch, yaw), translation }
    }

    pub fn from_translation(t: Point3) -> Self {
        Self { translation: t, ..Self::identity() }
    }

    pub fn euler(&self) -> [f64; 3] {
        self.euler
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Point3 {
        &self.translation
    }

    pub fn is_identity(&self) -> bool {
        self.rotation == Matrix3::identity() && self.translation == Point3::zeros()
    }

    #[inline]
    pub fn apply(&self, x: &Point3) -> Point3 {
        self.rotation * x + self.translation
    }

    pub fn transform_points(&self, cloud: &[Point3]) -> Vec<Point3> {
        cloud.iter().map(|x| self.apply(x)).collect()
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Pose) -> Pose {
        let rotation = self.rotation * other.rotation;
        Pose {
            euler: matrix_to_euler(&rotation),
            rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let rotation = self.rotation.transpose();
        Pose { euler: matrix_to_euler(&rotation), rotation, translation: -(rotation * self.translation) }
    }

    /// Rescales the translation to length `delta_x`, leaving the rotation untouched.
    pub fn scaled_to(&self, delta_x: f64) -> Result<Pose> {
        if !(delta_x > 0.0 && delta_x.is_finite()) {
            return Err(Error::InvalidArgument(format!("displacement must be positive, got {delta_x}")));
        }
        let norm = self.translation.norm();
        if norm <= MIN_BASELINE {
            return Err(Error::DegenerateBaseline(norm));
        }
        Ok(Pose { translation: self.translation * (delta_x / norm), ..*self })
    }

    /// Multiplies the translation by `factor`.
    pub fn with_translation_scaled(&self, factor: f64) -> Pose {
        Pose { translation: self.translation * factor, ..*self }
    }
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

pub fn compose(p1: &Pose, p2: &Pose) -> Pose {
    p1.compose(p2)
}

pub fn invert(p: &Pose) -> Pose {
    p.inverse()
}

pub fn transform_points(p: &Pose, cloud: &[Point3]) -> Vec<Point3> {
    p.transform_points(cloud)
}

pub fn scale_pose(p: &Pose, delta_x: f64) -> Result<Pose> {
    p.scaled_to(delta_x)
}

fn euler_to_matrix(roll: f64, pitch: f64, yaw: f64) -> Matrix3<f64> {
    let (sr, cr) = roll.sin_cos();
    let (sp, cp) = pitch.sin_cos();
    let (sy, cy) = yaw.sin_cos();
    let rx = Matrix3::new(1.0, 0.0, 0.0, 0.0, cr, -sr, 0.0, sr, cr);
    let ry = Matrix3::new(cp, 0.0, sp, 0.0, 1.0, 0.0, -sp, 0.0, cp);
    let rz = Matrix3::new(cy, -sy, 0.0, sy, cy, 0.0, 0.0, 0.0, 1.0);
    rx * ry * rz
}

fn matrix_to_euler(r: &Matrix3<f64>) -> [f64; 3] {
    // r02 = sin(pitch); at gimbal lock yaw is folded into roll.
    let sp = r[(0, 2)].clamp(-1.0, 1.0);
    let pitch = sp.asin();
    if sp.abs() < 1.0 - 1e-12 {
        [(-r[(1, 2)]).atan2(r[(2, 2)]), pitch, (-r[(0, 1)]).atan2(r[(0, 0)])]
    } else {
        [r[(2, 1)].atan2(r[(1, 1)]), pitch, 0.0]
    }
}

impl fmt::Display for Pose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [r, p, y] = self.euler;
        let t = self.translation;
        write!(f, "{r:?} {p:?} {y:?} {:?} {:?} {:?}", t.x, t.y, t.z)
    }
}

/// Parses `"roll pitch yaw tx ty tz"`.
impl FromStr for Pose {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let values = s
            .split_whitespace()
            .map(|tok| tok.parse::<f64>().map_err(|e| Error::Format(format!("bad pose value {tok:?}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        if values.len() != 6 {
            return Err(Error::Format(format!("pose needs 6 numbers, got {}", values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("pose"));
        }
        Ok(Pose::new(values[0], values[1], values[2], Point3::new(values[3], values[4], values[5])))
    }
}

/// Vehicle speed sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdometrySample {
    #[serde(rename = "t")]
    pub timestamp: f64,
    pub v: f64,
}

/// Distance travelled between two samples by trapezoidal integration.
pub fn displacement_from_odometry(a: &OdometrySample, b: &OdometrySample) -> Result<f64> {
    let dt = (b.timestamp - a.timestamp).abs();
    if dt == 0.0 || !dt.is_finite() {
        return Err(Error::InvalidArgument("odometry samples need distinct timestamps".into()));
    }
    Ok(0.5 * (a.v + b.v) * dt)
}

/// Relative poses of a snippet, stored as adjacent transforms
/// `T_{i -> i+1}` that map camera-`i` coordinates into camera `i+1`.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseSet {
    adjacent: Vec<Pose>,
}

impl PoseSet {
    pub fn from_adjacent(adjacent: Vec<Pose>) -> Self {
        Self { adjacent }
    }

    /// From camera-to-reference poses `C_i` (`X_ref = C_i X_i`).
    pub fn from_camera_poses(cameras: &[Pose]) -> Self {
        let adjacent = cameras.windows(2).map(|w| w[1].inverse().compose(&w[0])).collect();
        Self { adjacent }
    }

    pub fn identity(n_frames: usize) -> Self {
        Self { adjacent: vec![Pose::identity(); n_frames.saturating_sub(1)] }
    }

    pub fn n_frames(&self) -> usize {
        self.adjacent.len() + 1
    }

    pub fn adjacent(&self) -> &[Pose] {
        &self.adjacent
    }

    /// `T_{from -> to}`.
    pub fn pair(&self, from: usize, to: usize) -> Result<Pose> {
        let n = self.n_frames();
        if from >= n || to >= n {
            return Err(Error::MissingPose(from, to));
        }
        if from == to {
            return Ok(Pose::identity());
        }
        let (lo, hi) = (from.min(to), from.max(to));
        let mut forward = self.adjacent[lo];
        for step in &self.adjacent[lo + 1..hi] {
            forward = step.compose(&forward);
        }
        Ok(if from < to { forward } else { forward.inverse() })
    }

    /// Rescales every adjacent translation to the odometry displacement.
    pub fn scaled_by_odometry(&self, odometry: &[OdometrySample]) -> Result<PoseSet> {
        if odometry.len() != self.n_frames() {
            return Err(Error::DimensionMismatch(format!(
                "{} odometry samples for {} frames",
                odometry.len(),
                self.n_frames()
            )));
        }
        let adjacent = self
            .adjacent
            .iter()
            .zip(odometry.windows(2))
            .map(|(pose, w)| {
                let dx = displacement_from_odometry(&w[0], &w[1])?;
                if dx <= MIN_BASELINE {
                    return Err(Error::DegenerateBaseline(dx));
                }
                pose.scaled_to(dx)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(PoseSet { adjacent })
    }

    pub fn with_translation_scaled(&self, factor: f64) -> PoseSet {
        PoseSet { adjacent: self.adjacent.iter().map(|p| p.with_translation_scaled(factor)).collect() }
    }

    /// Smallest adjacent baseline.
    pub fn min_baseline(&self) -> f64 {
        self.adjacent.iter().map(|p| p.translation().norm()).fold(f64::INFINITY, f64::min)
    }
}

#[cfg(test)]
mod tests {
    use std::f64::consts::FRAC_PI_2;

    use super::*;

    #[test]
    fn point_actions() {
        let x = Point3::new(1.0, 2.0, 3.0);
        assert_eq!(Pose::identity().apply(&x), x);
        assert_eq!(Pose::from_translation(Point3::new(0.0, 0.0, 1.0)).apply(&x), Point3::new(1.0, 2.0, 4.0));
        let yaw = Pose::new(0.0, 0.0, FRAC_PI_2, Point3::zeros());
        assert!((yaw.apply(&Point3::new(1.0, 0.0, 0.0)) - Point3::new(0.0, 1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn euler_round_trip_through_composition() {
        let p = Pose::new(0.1, -0.4, 2.0, Point3::new(1.0, 0.0, 0.0));
        let q = Pose::identity().compose(&p);
        for (a, b) in p.euler().iter().zip(q.euler()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn displacement() {
        let a = OdometrySample { timestamp: 0.0, v: 10.0 };
        let b = OdometrySample { timestamp: 0.1, v: 10.0 };
        assert!((displacement_from_odometry(&a, &b).unwrap() - 1.0).abs() < 1e-12);
        let a = OdometrySample { timestamp: 0.0, v: 8.0 };
        let b = OdometrySample { timestamp: 0.1, v: 12.0 };
        assert!((displacement_from_odometry(&a, &b).unwrap() - 1.0).abs() < 1e-12);
        let z = OdometrySample { timestamp: 0.1, v: 0.0 };
        assert_eq!(displacement_from_odometry(&OdometrySample { timestamp: 0.0, v: 0.0 }, &z).unwrap(), 0.0);
        assert!(displacement_from_odometry(&z, &z).is_err());
    }

    #[test]
    fn scale_pose_examples() {
        let p = Pose::new(0.2, 0.1, -0.3, Point3::new(0.0, 0.0, 2.0));
        let s = scale_pose(&p, 0.5).unwrap();
        assert_eq!(*s.translation(), Point3::new(0.0, 0.0, 0.5));
        assert_eq!(s.rotation(), p.rotation());
        let s = scale_pose(&Pose::from_translation(Point3::new(3.0, 4.0, 0.0)), 10.0).unwrap();
        assert!((s.translation() - Point3::new(6.0, 8.0, 0.0)).norm() < 1e-12);
        assert!(matches!(scale_pose(&Pose::identity(), 1.0), Err(Error::DegenerateBaseline(_))));
        assert!(scale_pose(&p, 0.0).is_err());
    }

    #[test]
    fn pose_text_form() {
        let p: Pose = "0.1 0.2 0.3 1 2 3".parse().unwrap();
        let q: Pose = p.to_string().parse().unwrap();
        assert_eq!(p, q);
        assert!("1 2 3".parse::<Pose>().is_err());
        assert!("a b c d e f".parse::<Pose>().is_err());
    }

    #[test]
    fn pose_set_pairs() {
        let cams = [
            Pose::identity(),
            Pose::new(0.0, 0.1, 0.0, Point3::new(0.3, 0.0, 0.0)),
            Pose::new(0.0, 0.2, 0.05, Point3::new(0.6, 0.1, 0.0)),
        ];
        let set = PoseSet::from_camera_poses(&cams);
        let x = Point3::new(0.5, -0.2, 4.0);
        // camera 0 point -> reference -> camera 2
        let expected = cams[2].inverse().apply(&cams[0].apply(&x));
        assert!((set.pair(0, 2).unwrap().apply(&x) - expected).norm() < 1e-12);
        let back = set.pair(2, 0).unwrap().apply(&expected);
        assert!((back - x).norm() < 1e-12);
        assert!(set.pair(0, 3).is_err());
        assert!(set.pair(1, 1).unwrap().is_identity());
    }

    #[test]
    fn odometry_scaling_sets_baselines() {
        let set = PoseSet::from_adjacent(vec![
            Pose::from_translation(Point3::new(2.0, 0.0, 0.0)),
            Pose::from_translation(Point3::new(0.0, 0.0, 7.0)),
        ]);
        let odo = [
            OdometrySample { timestamp: 0.0, v: 4.0 },
            OdometrySample { timestamp: 0.1, v: 6.0 },
            OdometrySample { timestamp: 0.3, v: 6.0 },
        ];
        let scaled = set.scaled_by_odometry(&odo).unwrap();
        assert!((scaled.adjacent()[0].translation().norm() - 0.5).abs() < 1e-12);
        assert!((scaled.adjacent()[1].translation().norm() - 1.2).abs() < 1e-12);
        assert!(set.scaled_by_odometry(&odo[..2]).is_err());
    }
}
