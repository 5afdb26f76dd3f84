//! Snippet directories: `frame_%03d.{ppm,pgm,png}`, optional
//! `frame_%03d_dist.pfm`, `intrinsics.json`, `odometry.json` and optional
//! `poses.txt` (camera-to-first-frame, one line per frame).

use std::path::{Path, PathBuf};

use super::pfm::{read_distance, write_distance};
use super::pnm::{read_image, write_image};
use super::text::{read_intrinsics, read_odometry, read_poses, write_intrinsics, write_odometry, write_poses};
use crate::camera::CameraModel;
use crate::error::{Error, Result};
use crate::synth::{Frame, SequenceSnippet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BundleOptions {
    /// Store frames as PNG instead of PGM/PPM.
    pub png: bool,
}

fn frame_image(dir: &Path, i: usize) -> Option<PathBuf> {
    ["ppm", "pgm", "png"].iter().map(|ext| dir.join(format!("frame_{i:03}.{ext}"))).find(|p| p.is_file())
}

pub fn read_bundle(dir: impl AsRef<Path>) -> Result<SequenceSnippet> {
    let dir = dir.as_ref();
    let intrinsics = match read_intrinsics(dir.join("intrinsics.json"))? {
        CameraModel::Fisheye(k) => k,
        CameraModel::Pinhole(_) => {
            return Err(Error::Format(format!("{}: bundles need fisheye intrinsics", dir.display())))
        }
    };
    let odometry = read_odometry(dir.join("odometry.json"))?;
    let mut images = Vec::new();
    while let Some(path) = frame_image(dir, images.len()) {
        images.push(read_image(path)?);
    }
    if images.is_empty() {
        return Err(Error::Format(format!("{}: no frame_000 image", dir.display())));
    }
    if odometry.len() != images.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} odometry samples for {} frames",
            odometry.len(),
            images.len()
        )));
    }
    let pose_path = dir.join("poses.txt");
    let poses = if pose_path.is_file() { Some(read_poses(&pose_path)?) } else { None };
    if let Some(p) = &poses {
        if p.len() != images.len() {
            return Err(Error::DimensionMismatch(format!("{} poses for {} frames", p.len(), images.len())));
        }
    }
    let frames = images
        .into_iter()
        .zip(odometry)
        .enumerate()
        .map(|(i, (image, odometry))| {
            let dist = dir.join(format!("frame_{i:03}_dist.pfm"));
            let distance = if dist.is_file() { Some(read_distance(dist)?) } else { None };
            Ok(Frame { image, distance, pose: poses.as_ref().map(|p| p[i]), odometry })
        })
        .collect::<Result<Vec<_>>>()?;
    SequenceSnippet::new(intrinsics, frames)
}

/// Writes every part of the snippet that is present. Poses are written only
/// when every frame has one.
pub fn write_bundle(dir: impl AsRef<Path>, snippet: &SequenceSnippet, opts: BundleOptions) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    write_intrinsics(dir.join("intrinsics.json"), &CameraModel::Fisheye(snippet.intrinsics))?;
    write_odometry(dir.join("odometry.json"), &snippet.odometry())?;
    for (i, f) in snippet.frames.iter().enumerate() {
        let ext = match (opts.png, f.image.channels()) {
            (true, _) => "png",
            (false, 1) => "pgm",
            _ => "ppm",
        };
        write_image(dir.join(format!("frame_{i:03}.{ext}")), &f.image)?;
        if let Some(d) = &f.distance {
            write_distance(dir.join(format!("frame_{i:03}_dist.pfm")), d)?;
        }
    }
    if let Some(poses) = snippet.frames.iter().map(|f| f.pose).collect::<Option<Vec<_>>>() {
        write_poses(dir.join("poses.txt"), &poses)?;
    }
    Ok(())
}
