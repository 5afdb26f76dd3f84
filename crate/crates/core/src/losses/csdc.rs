use std::hash::Hasher;

use crate::camera::FisheyeCamera;
use crate::error::{Error, Result};
use crate::image::DistanceMap;
use crate::se3::PoseSet;
use crate::synth::SequenceSnippet;
use crate::warp::dense_warp;

#[derive(Debug, Clone)]
pub(crate) struct CsdcTerms {
    pub value: f64,
    /// Per frame, empty unless requested.
    pub grads: Vec<Vec<f64>>,
}

/// Distance consistency over every ordered frame pair: the range of each
/// transformed point against a bilinear read of the other frame's map.
pub(crate) fn csdc_terms(
    camera: &FisheyeCamera,
    maps: &[&[f64]],
    poses: &PoseSet,
    want_grad: bool,
    fp: &mut dyn Hasher,
) -> Result<CsdcTerms> {
    let n = maps.len();
    let w = camera.width();
    let mut sum = 0.0;
    let mut count = 0usize;
    let mut grads = if want_grad { vec![vec![0.0; w * camera.height()]; n] } else { Vec::new() };
    for a in 0..n {
        for b in 0..n {
            if a == b {
                continue;
            }
            let warp = dense_warp(camera, maps[a], &poses.pair(a, b)?);
            for (i, cell) in warp.cells.iter().enumerate() {
                let Some(cell) = cell else {
                    fp.write_u8(0);
                    continue;
                };
                let (read, du, dv) = cell.sample(w, |j| maps[b][j]);
                let e = warp.range[i] - read;
                fp.write_usize(cell.y0 * w + cell.x0);
                fp.write_i8(if e > 0.0 { 1 } else if e < 0.0 { -1 } else { 0 });
                sum += e.abs();
                count += 1;
                if want_grad && e != 0.0 {
                    let s = e.signum();
                    let [gu, gv] = warp.flow_grad[i];
                    grads[a][i] += s * (warp.range_grad[i] - du * gu - dv * gv);
                    for (j, tw) in cell.taps(w) {
                        grads[b][j] -= s * tw;
                    }
                }
            }
        }
    }
    if count == 0 {
        return Ok(CsdcTerms { value: 0.0, grads });
    }
    let scale = 1.0 / count as f64;
    for g in grads.iter_mut().flatten() {
        *g *= scale;
    }
    Ok(CsdcTerms { value: sum * scale, grads })
}

/// Cross-sequence distance consistency of the full-resolution maps, averaged
/// over all valid pixels of all ordered pairs. Zero when nothing overlaps.
pub fn csdc_loss(snippet: &SequenceSnippet, maps: &[DistanceMap], poses: &PoseSet) -> Result<f64> {
    let n = snippet.len();
    if n < 2 {
        return Err(Error::InvalidArgument("consistency needs at least two frames".into()));
    }
    if maps.len() != n {
        return Err(Error::DimensionMismatch(format!("{} distance maps for {n} frames", maps.len())));
    }
    if poses.n_frames() != n {
        return Err(Error::MissingPose(poses.n_frames().min(n), n.max(poses.n_frames()) - 1));
    }
    let k = &snippet.intrinsics;
    if maps.iter().any(|d| d.width() != k.width || d.height() != k.height) {
        return Err(Error::DimensionMismatch("distance maps must match the intrinsics".into()));
    }
    let camera = FisheyeCamera::new(*k)?;
    let slices: Vec<&[f64]> = maps.iter().map(|d| d.data()).collect();
    let mut sink = std::collections::hash_map::DefaultHasher::new();
    Ok(csdc_terms(&camera, &slices, poses, false, &mut sink)?.value)
}
