//! Ray-cast renderer producing images with exact distance ground truth, and
//! snippets of consecutive frames with consistent odometry.

use serde::{Deserialize, Serialize};

use crate::camera::{CameraModel, FisheyeIntrinsics, Pixel, Point3};
use crate::error::{Error, Result};
use crate::image::{DistanceMap, Image, Mask};
use crate::parallel::map_range;
use crate::se3::{displacement_from_odometry, OdometrySample, Pose, PoseSet};

const HIT_EPSILON: f64 = 1e-9;

/// Solid (3D) procedural texture evaluated at world points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Texture {
    Constant {
        value: f64,
    },
    Checker {
        size: f64,
        low: f64,
        high: f64,
    },
    ValueNoise {
        /// Lattice cells per metre.
        frequency: f64,
        contrast: f64,
        seed: u64,
        #[serde(default = "one")]
        octaves: u32,
    },
    /// `low` inside the slab `|n . x - offset| < width / 2`, `high` elsewhere.
    Stripe {
        normal: [f64; 3],
        offset: f64,
        width: f64,
        low: f64,
        high: f64,
    },
}

fn one() -> u32 {
    1
}

impl Texture {
    pub fn noise(frequency: f64, contrast: f64, seed: u64) -> Self {
        Texture::ValueNoise { frequency, contrast, seed, octaves: 1 }
    }

    pub fn eval(&self, x: &Point3) -> f64 {
        let value = match self {
            Texture::Constant { value } => *value,
            Texture::Checker { size, low, high } => {
                let parity = (x / *size).iter().map(|c| c.floor() as i64).sum::<i64>().rem_euclid(2);
                if parity == 0 {
                    *low
                } else {
                    *high
                }
            }
            Texture::ValueNoise { frequency, contrast, seed, octaves } => {
                let mut total = 0.0;
                let mut amplitude = 1.0;
                let mut norm = 0.0;
                let mut f = *frequency;
                for o in 0..(*octaves).max(1) {
                    total += amplitude * value_noise(&(x * f), seed.wrapping_add(o as u64 * 0x9e37_79b9));
                    norm += amplitude;
                    amplitude *= 0.5;
                    f *= 2.0;
                }
                0.5 + contrast * (total / norm - 0.5)
            }
            Texture::Stripe { normal, offset, width, low, high } => {
                let n = Point3::from(*normal).normalize();
                if (n.dot(x) - offset).abs() < 0.5 * width {
                    *low
                } else {
                    *high
                }
            }
        };
        value.clamp(0.0, 1.0)
    }
}

fn hash3(i: i64, j: i64, k: i64, seed: u64) -> f64 {
    let mut h = seed ^ 0x51_7cc1_b727_220a;
    for v in [i, j, k] {
        h = h.wrapping_add(v as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
        h ^= h >> 31;
        h = h.wrapping_mul(0xbf58_476d_1ce4_e5b9);
        h ^= h >> 29;
    }
    (h >> 11) as f64 / (1u64 << 53) as f64
}

/// Trilinear interpolation of lattice values with smoothstep weights.
fn value_noise(x: &Point3, seed: u64) -> f64 {
    let base = x.map(f64::floor);
    let f = x - base;
    let s = f.map(|t| t * t * (3.0 - 2.0 * t));
    let (i, j, k) = (base.x as i64, base.y as i64, base.z as i64);
    let mut acc = 0.0;
    for dk in 0..2 {
        for dj in 0..2 {
            for di in 0..2 {
                let w = (if di == 0 { 1.0 - s.x } else { s.x })
                    * (if dj == 0 { 1.0 - s.y } else { s.y })
                    * (if dk == 0 { 1.0 - s.z } else { s.z });
                acc += w * hash3(i + di, j + dj, k + dk, seed);
            }
        }
    }
    acc
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Primitive {
    /// Infinite plane through `point` with normal `normal`.
    Plane { point: [f64; 3], normal: [f64; 3], texture: Texture },
    Sphere { center: [f64; 3], radius: f64, texture: Texture },
    /// Axis-aligned box; rays starting inside hit the interior walls.
    #[serde(rename = "box")]
    AaBox { min: [f64; 3], max: [f64; 3], texture: Texture },
}

impl Primitive {
    /// Smallest ray parameter `t > 0` with `origin + t dir` on the surface.
    pub fn intersect(&self, origin: &Point3, dir: &Point3) -> Option<f64> {
        match self {
            Primitive::Plane { point, normal, .. } => {
                let n = Point3::from(*normal);
                let denom = n.dot(dir);
                if denom.abs() < 1e-15 {
                    return None;
                }
                let t = n.dot(&(Point3::from(*point) - origin)) / denom;
                (t > HIT_EPSILON).then_some(t)
            }
            Primitive::Sphere { center, radius, .. } => sphere_hit(origin, dir, &Point3::from(*center), *radius),
            Primitive::AaBox { min, max, .. } => {
                let (mut t_near, mut t_far) = (f64::NEG_INFINITY, f64::INFINITY);
                for axis in 0..3 {
                    let (lo, hi) = (min[axis], max[axis]);
                    if dir[axis].abs() < 1e-15 {
                        if origin[axis] < lo || origin[axis] > hi {
                            return None;
                        }
                        continue;
                    }
                    let t1 = (lo - origin[axis]) / dir[axis];
                    let t2 = (hi - origin[axis]) / dir[axis];
                    t_near = t_near.max(t1.min(t2));
                    t_far = t_far.min(t1.max(t2));
                }
                if t_near > t_far {
                    return None;
                }
                if t_near > HIT_EPSILON {
                    Some(t_near)
                } else if t_far > HIT_EPSILON {
                    Some(t_far)
                } else {
                    None
                }
            }
        }
    }

    pub fn texture(&self) -> &Texture {
        match self {
            Primitive::Plane { texture, .. } | Primitive::Sphere { texture, .. } | Primitive::AaBox { texture, .. } => {
                texture
            }
        }
    }
}

fn sphere_hit(origin: &Point3, dir: &Point3, center: &Point3, radius: f64) -> Option<f64> {
    let oc = origin - center;
    let b = oc.dot(dir);
    let c = oc.norm_squared() - radius * radius;
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    // numerically stable pair of roots of t^2 + 2bt + c = 0
    let q = if b > 0.0 { -b - sq } else { -b + sq };
    let (r1, r2) = if q != 0.0 { (q, c / q) } else { (0.0, 0.0) };
    let (lo, hi) = (r1.min(r2), r1.max(r2));
    if lo > HIT_EPSILON {
        Some(lo)
    } else if hi > HIT_EPSILON {
        Some(hi)
    } else {
        None
    }
}

/// Sphere of radius `distance` around the world origin that catches every
/// ray missing the primitives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Background {
    pub distance: f64,
    pub texture: Texture,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub primitives: Vec<Primitive>,
    pub background: Background,
}

impl Scene {
    /// Textured wall, floor, sphere and a surrounding backdrop at desk scale.
    pub fn desk() -> Self {
        Scene {
            primitives: vec![
                Primitive::Plane {
                    point: [0.0, 0.0, 6.0],
                    normal: [0.0, 0.0, -1.0],
                    texture: Texture::noise(0.35, 0.9, 11),
                },
                Primitive::Plane {
                    point: [0.0, 1.6, 0.0],
                    normal: [0.0, -1.0, 0.0],
                    texture: Texture::noise(0.5, 0.9, 23),
                },
                Primitive::Sphere {
                    center: [-0.9, 0.1, 3.6],
                    radius: 1.0,
                    texture: Texture::noise(0.7, 0.9, 37),
                },
            ],
            background: Background { distance: 14.0, texture: Texture::noise(0.15, 0.9, 5) },
        }
    }

    /// Planar textured panel with a sphere in front of it, inside a textured
    /// enclosing sphere. Every surface faces the camera, so point-sampled
    /// renders stay free of grazing-angle aliasing at low resolution.
    pub fn panel_and_sphere() -> Self {
        Scene {
            primitives: vec![
                Primitive::AaBox {
                    min: [-1.5, -1.0, 2.5],
                    max: [1.5, 1.0, 2.6],
                    texture: Texture::noise(0.4, 0.9, 11),
                },
                Primitive::Sphere {
                    center: [-0.45, 0.12, 1.6],
                    radius: 0.5,
                    texture: Texture::noise(1.0, 0.9, 37),
                },
            ],
            background: Background { distance: 3.2, texture: Texture::noise(0.35, 0.9, 5) },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.background.distance > 0.0 && self.background.distance.is_finite()) {
            return Err(Error::InvalidArgument("background distance must be positive".into()));
        }
        for p in &self.primitives {
            let ok = match p {
                Primitive::Plane { normal, .. } => Point3::from(*normal).norm() > 0.0,
                Primitive::Sphere { radius, .. } => *radius > 0.0,
                Primitive::AaBox { min, max, .. } => (0..3).all(|i| min[i] < max[i]),
            };
            if !ok {
                return Err(Error::InvalidArgument(format!("degenerate primitive {p:?}")));
            }
        }
        Ok(())
    }

    /// Nearest hit along a unit world ray: distance and intensity.
    pub fn trace(&self, origin: &Point3, dir: &Point3) -> (f64, f64) {
        let mut best: Option<(f64, &Texture)> = None;
        for p in &self.primitives {
            if let Some(t) = p.intersect(origin, dir) {
                if best.is_none_or(|(b, _)| t < b) {
                    best = Some((t, p.texture()));
                }
            }
        }
        let (t, texture) = best.unwrap_or_else(|| {
            let t = sphere_hit(origin, dir, &Point3::zeros(), self.background.distance).unwrap_or(self.background.distance);
            (t, &self.background.texture)
        });
        (t, texture.eval(&(origin + dir * t)))
    }
}

/// Rendered frame: intensity, ground-truth distance, and the pixels that
/// carry a calibrated ray. Uncalibrated pixels are black and hold the
/// background distance.
#[derive(Debug, Clone, PartialEq)]
pub struct Render {
    pub image: Image,
    pub distance: DistanceMap,
    pub valid: Mask,
}

/// Casts one ray per pixel centre from a camera with camera-to-world `pose`.
pub fn render(scene: &Scene, camera: &CameraModel, pose: &Pose) -> Render {
    let (w, h) = camera.size();
    let origin = *pose.translation();
    let samples = map_range(w * h, |i| {
        let p = Pixel::new((i % w) as f64, (i / w) as f64);
        let ray = match camera {
            CameraModel::Fisheye(k) => k.ray_exact(p).ok(),
            CameraModel::Pinhole(k) => Some(
                Point3::new((p.u - k.principal[0]) / k.focal[0], (p.v - k.principal[1]) / k.focal[1], 1.0).normalize(),
            ),
        };
        match ray {
            Some(r) => {
                let dir = pose.rotation() * r;
                let (t, value) = scene.trace(&origin, &dir);
                (value, t, true)
            }
            None => (0.0, scene.background.distance, false),
        }
    });
    let mut img = Vec::with_capacity(w * h);
    let mut dist = Vec::with_capacity(w * h);
    let mut valid = Vec::with_capacity(w * h);
    for (value, t, ok) in samples {
        img.push(value);
        dist.push(t);
        valid.push(ok);
    }
    Render {
        image: Image::from_raw(w, h, 1, img),
        distance: DistanceMap::from_raw(w, h, dist),
        valid: Mask::new(w, h, valid).expect("sizes agree"),
    }
}

/// One frame of a training snippet.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub image: Image,
    /// Ground-truth distance, when known.
    pub distance: Option<DistanceMap>,
    /// Camera-to-first-frame pose, when known.
    pub pose: Option<Pose>,
    pub odometry: OdometrySample,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceSnippet {
    pub intrinsics: FisheyeIntrinsics,
    pub frames: Vec<Frame>,
}

impl SequenceSnippet {
    pub fn new(intrinsics: FisheyeIntrinsics, frames: Vec<Frame>) -> Result<Self> {
        let snippet = Self { intrinsics, frames };
        snippet.validate()?;
        Ok(snippet)
    }

    pub fn validate(&self) -> Result<()> {
        self.intrinsics.validate()?;
        if self.frames.len() < 2 {
            return Err(Error::InvalidArgument(format!("a snippet needs at least 2 frames, got {}", self.frames.len())));
        }
        let (w, h) = (self.intrinsics.width, self.intrinsics.height);
        let c = self.frames[0].image.channels();
        for (i, f) in self.frames.iter().enumerate() {
            if f.image.width() != w || f.image.height() != h || f.image.channels() != c {
                return Err(Error::DimensionMismatch(format!("frame {i} does not match the snippet geometry")));
            }
            if let Some(d) = &f.distance {
                if d.width() != w || d.height() != h {
                    return Err(Error::DimensionMismatch(format!("distance map {i} does not match the image")));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn images(&self) -> Vec<&Image> {
        self.frames.iter().map(|f| &f.image).collect()
    }

    pub fn odometry(&self) -> Vec<OdometrySample> {
        self.frames.iter().map(|f| f.odometry).collect()
    }

    pub fn ground_truth(&self) -> Option<Vec<DistanceMap>> {
        self.frames.iter().map(|f| f.distance.clone()).collect()
    }

    /// Relative poses from the stored camera poses.
    pub fn pose_set(&self) -> Result<PoseSet> {
        let cams = self
            .frames
            .iter()
            .enumerate()
            .map(|(i, f)| f.pose.ok_or(Error::MissingPose(i, 0)))
            .collect::<Result<Vec<_>>>()?;
        Ok(PoseSet::from_camera_poses(&cams))
    }

    /// Stored relative poses with each baseline rescaled to the odometry displacement.
    pub fn odometry_scaled_poses(&self) -> Result<PoseSet> {
        self.pose_set()?.scaled_by_odometry(&self.odometry())
    }
}

/// A camera pose on a trajectory and the vehicle speed there.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryPoint {
    pub pose: Pose,
    pub speed: f64,
}

/// `n` equally spaced camera poses moving by `step` (camera-to-world frame)
/// per frame at constant `speed`.
pub fn straight_trajectory(n: usize, step: Point3, speed: f64) -> Vec<TrajectoryPoint> {
    (0..n)
        .map(|i| TrajectoryPoint { pose: Pose::from_translation(step * i as f64), speed })
        .collect()
}

/// Renders the first `n` trajectory poses. Timestamps are chosen so that
/// trapezoidal integration of the speeds reproduces each camera displacement.
pub fn make_snippet(
    scene: &Scene,
    k: &FisheyeIntrinsics,
    trajectory: &[TrajectoryPoint],
    n: usize,
) -> Result<SequenceSnippet> {
    if n < 2 || trajectory.len() < n {
        return Err(Error::InvalidArgument(format!(
            "need 2 <= n <= {} frames, got {n}",
            trajectory.len()
        )));
    }
    scene.validate()?;
    let reference = trajectory[0].pose.inverse();
    let model = CameraModel::Fisheye(*k);
    let mut frames = Vec::with_capacity(n);
    let mut time = 0.0;
    for i in 0..n {
        let point = trajectory[i];
        if i > 0 {
            let prev = trajectory[i - 1];
            let moved = (point.pose.translation() - prev.pose.translation()).norm();
            let speed_sum = prev.speed + point.speed;
            let dt = if moved == 0.0 && speed_sum == 0.0 {
                0.1
            } else if speed_sum > 0.0 && moved > 0.0 {
                2.0 * moved / speed_sum
            } else {
                return Err(Error::InvalidArgument(format!(
                    "speeds {} and {} cannot produce a displacement of {moved} m",
                    prev.speed, point.speed
                )));
            };
            time += dt;
        }
        let r = render(scene, &model, &point.pose);
        frames.push(Frame {
            image: r.image,
            distance: Some(r.distance),
            pose: Some(reference.compose(&point.pose)),
            odometry: OdometrySample { timestamp: time, v: point.speed },
        });
    }
    let snippet = SequenceSnippet::new(*k, frames)?;
    debug_assert!(odometry_consistent(&snippet));
    Ok(snippet)
}

/// True when every adjacent baseline matches the odometry displacement.
pub fn odometry_consistent(snippet: &SequenceSnippet) -> bool {
    let Ok(poses) = snippet.pose_set() else {
        return false;
    };
    let odo = snippet.odometry();
    poses.adjacent().iter().zip(odo.windows(2)).all(|(p, w)| {
        displacement_from_odometry(&w[0], &w[1]).is_ok_and(|dx| (p.translation().norm() - dx).abs() < 1e-9)
    })
}
