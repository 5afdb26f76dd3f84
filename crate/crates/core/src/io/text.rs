//! Intrinsics and odometry JSON, and whitespace pose lists.

use std::path::Path;

use super::pfm::read_text;
use crate::camera::{CameraModel, PinholeIntrinsics};
use crate::error::{Error, Result};
use crate::se3::{OdometrySample, Pose};
use crate::synth::Scene;

fn context(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Format(format!("{}: {e}", path.display()))
}

/// Parses `{"model": "fisheye" | "pinhole", ...}` and validates it.
pub fn parse_intrinsics(text: &str) -> Result<CameraModel> {
    let model: CameraModel = serde_json::from_str(text)?;
    match model {
        CameraModel::Fisheye(k) => k.validate()?,
        CameraModel::Pinhole(k) => {
            PinholeIntrinsics::new(k.focal, k.principal, k.width, k.height)?;
        }
    }
    Ok(model)
}

pub fn read_intrinsics(path: impl AsRef<Path>) -> Result<CameraModel> {
    let path = path.as_ref();
    parse_intrinsics(&read_text(path)?).map_err(|e| context(path, e))
}

pub fn write_intrinsics(path: impl AsRef<Path>, model: &CameraModel) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(model)?)?;
    Ok(())
}

/// JSON array of `{"t": seconds, "v": metres per second}`.
pub fn read_odometry(path: impl AsRef<Path>) -> Result<Vec<OdometrySample>> {
    let path = path.as_ref();
    let samples: Vec<OdometrySample> =
        serde_json::from_str(&read_text(path)?).map_err(|e| context(path, e))?;
    if samples.iter().any(|s| !s.timestamp.is_finite() || !s.v.is_finite()) {
        return Err(context(path, "non-finite odometry sample"));
    }
    Ok(samples)
}

pub fn write_odometry(path: impl AsRef<Path>, samples: &[OdometrySample]) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(samples)?)?;
    Ok(())
}

/// One `roll pitch yaw tx ty tz` pose per line; blank lines and `#`
/// comments are skipped.
pub fn parse_poses(text: &str) -> Result<Vec<Pose>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(i, l)| l.parse().map_err(|e| Error::Format(format!("line {}: {e}", i + 1))))
        .collect()
}

pub fn read_poses(path: impl AsRef<Path>) -> Result<Vec<Pose>> {
    let path = path.as_ref();
    parse_poses(&read_text(path)?).map_err(|e| context(path, e))
}

pub fn write_poses(path: impl AsRef<Path>, poses: &[Pose]) -> Result<()> {
    let mut text = String::from("# roll pitch yaw tx ty tz\n");
    for p in poses {
        text.push_str(&format!("{p}\n"));
    }
    std::fs::write(path, text)?;
    Ok(())
}

/// Scene description JSON, validated.
pub fn read_scene(path: impl AsRef<Path>) -> Result<Scene> {
    let path = path.as_ref();
    let scene: Scene = serde_json::from_str(&read_text(path)?).map_err(|e| context(path, e))?;
    scene.validate().map_err(|e| context(path, e))?;
    Ok(scene)
}

pub fn write_scene(path: impl AsRef<Path>, scene: &Scene) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(scene)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
use crate::camera::{FisheyeIntrinsics, Point3};

    #[test]
    fn intrinsics_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("k.json");
        let model = CameraModel::Fisheye(FisheyeIntrinsics::reference(64, 40));
        write_intrinsics(&path, &model).unwrap();
        assert_eq!(read_intrinsics(&path).unwrap(), model);
    }

    #[test]
    fn pinhole_intrinsics_parse() {
        let text = r#"{"model":"pinhole","focal":[100,100],"principal":[31.5,19.5],"width":64,"height":40}"#;
        assert!(matches!(parse_intrinsics(text).unwrap(), CameraModel::Pinhole(_)));
        let bad = r#"{"model":"pinhole","focal":[0,100],"principal":[31.5,19.5],"width":64,"height":40}"#;
        assert!(parse_intrinsics(bad).is_err());
    }

    #[test]
    fn unknown_model_is_rejected() {
        assert!(parse_intrinsics(r#"{"model":"orthographic"}"#).is_err());
    }

    #[test]
    fn poses_skip_comments() {
        let poses = parse_poses("# header\n\n0 0 0 0 0 0\n  0.1 0 0 1 2 3\n").unwrap();
        assert_eq!(poses.len(), 2);
        assert_eq!(*poses[1].translation(), Point3::new(1.0, 2.0, 3.0));
        let err = parse_poses("0 0 0\n").unwrap_err().to_string();
        assert!(err.contains("line 1"));
    }

    #[test]
    fn poses_round_trip_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("poses.txt");
        let poses = vec![Pose::identity(), Pose::new(0.013, -0.2, 0.7, Point3::new(0.1, 1.0 / 3.0, -2.5))];
        write_poses(&path, &poses).unwrap();
        let back = read_poses(&path).unwrap();
        for (a, b) in poses.iter().zip(&back) {
            assert_eq!(a.euler(), b.euler());
            assert_eq!(a.translation(), b.translation());
        }
    }

    #[test]
    fn scene_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scene.json");
        write_scene(&path, &Scene::panel_and_sphere()).unwrap();
        assert_eq!(read_scene(&path).unwrap(), Scene::panel_and_sphere());
    }

    #[test]
    fn missing_file_names_the_path() {
        let err = read_odometry("/nonexistent/odometry.json").unwrap_err().to_string();
        assert!(err.contains("/nonexistent/odometry.json"));
    }

    #[test]
    fn odometry_json_uses_t_and_v() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("odometry.json");
        std::fs::write(&path, r#"[{"t":0.0,"v":5.0},{"t":0.1,"v":5.0}]"#).unwrap();
        let s = read_odometry(&path).unwrap();
        assert_eq!(s[1], OdometrySample { timestamp: 0.1, v: 5.0 });
    }
}
