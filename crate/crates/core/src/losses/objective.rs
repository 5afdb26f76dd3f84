use std::collections::hash_map::DefaultHasher;
use std::hash::Hasher;

use serde::{Deserialize, Serialize};

use super::csdc::csdc_terms;
use super::photometric::{omega_from_errors, photometric_backward, photometric_error, reduce_min_clipped};
use super::smoothness::smoothness_terms;
use super::{LossWeights, PixelMap};
use crate::camera::FisheyeCamera;
use crate::error::{Error, Result};
use crate::image::{DistanceMap, Image, Mask};
use crate::se3::PoseSet;
use crate::synth::SequenceSnippet;
use crate::warp::{dense_warp, DenseWarp};

/// Loss terms of one pyramid level, before the level weight.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ScaleLosses {
    pub photometric_forward: f64,
    pub photometric_backward: f64,
    pub smoothness: f64,
    pub csdc: f64,
}

/// Photometric error and ego mask of one (target, source) pair at full resolution.
#[derive(Debug, Clone)]
pub struct PairDiagnostics {
    pub target: usize,
    pub source: usize,
    pub backward: bool,
    pub pe: PixelMap,
    pub ego: Mask,
}

#[derive(Debug, Clone, Default)]
pub struct Diagnostics {
    pub pairs: Vec<PairDiagnostics>,
    /// `(target, backward, omega)` per supervised target.
    pub omega: Vec<(usize, bool, Mask)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LossReport {
    pub total: f64,
    pub scales: Vec<ScaleLosses>,
    pub beta: f64,
    pub gamma: f64,
    pub decay_smoothness: bool,
    #[serde(skip)]
    pub diagnostics: Option<Diagnostics>,
}

impl LossReport {
    /// Weight of pyramid level `n` (0 = full resolution).
    pub fn scale_weight(n: usize) -> f64 {
        0.5f64.powi(n as i32)
    }

    /// Total rebuilt from the per-scale breakdown.
    pub fn recompute_total(&self) -> f64 {
        self.scales
            .iter()
            .enumerate()
            .map(|(n, s)| {
                let w = Self::scale_weight(n);
                let ws = if self.decay_smoothness { w } else { 1.0 };
                w * (s.photometric_forward + s.photometric_backward + self.gamma * s.csdc) + ws * self.beta * s.smoothness
            })
            .sum()
    }

    /// Scale-weighted photometric part of the total.
    pub fn photometric(&self) -> f64 {
        self.scales
            .iter()
            .enumerate()
            .map(|(n, s)| Self::scale_weight(n) * (s.photometric_forward + s.photometric_backward))
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    /// Apply the static-pixel mask; off means every pixel may be supervised.
    pub automask: bool,
    /// Clip thresholds per `(scale, direction)` at index `2 * scale + dir`,
    /// replacing the percentile estimate where set.
    pub pinned_thresholds: Option<Vec<Option<f64>>>,
    pub gradient: bool,
    pub diagnostics: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { automask: true, pinned_thresholds: None, gradient: false, diagnostics: false }
    }
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub report: LossReport,
    /// dL/dD per frame at full resolution, when requested.
    pub gradient: Option<Vec<Vec<f64>>>,
    /// Clip thresholds used, indexed like `EvalOptions::pinned_thresholds`.
    pub thresholds: Vec<Option<f64>>,
    /// Hash of every discrete choice the loss made (valid sets, sampling
    /// cells, argmin, clipping, automask, absolute-value signs). Equal
    /// fingerprints mean the loss is smooth between two evaluations.
    pub fingerprint: u64,
}

struct Level {
    camera: FisheyeCamera,
    images: Vec<Image>,
}

type Schedule = Vec<(usize, Vec<usize>)>;

/// The multi-scale objective of one snippet with fixed poses.
pub struct Objective {
    weights: LossWeights,
    poses: PoseSet,
    levels: Vec<Level>,
    schedule: [Schedule; 2],
}

/// Forward: interior frames from both neighbours. Backward: the neighbours
/// from the interior frame.
fn schedule(n: usize) -> [Schedule; 2] {
    if n == 2 {
        return [vec![(0, vec![1])], vec![(1, vec![0])]];
    }
    let fwd = (1..n - 1).map(|t| (t, vec![t - 1, t + 1])).collect();
    let bwd = (1..n - 1).flat_map(|t| [(t - 1, vec![t]), (t + 1, vec![t])]).collect();
    [fwd, bwd]
}

struct SourceEval {
    source: usize,
    warp: DenseWarp,
    recon: Image,
    ego: Mask,
    pe: PixelMap,
}

impl Objective {
    pub fn new(snippet: &SequenceSnippet, poses: &PoseSet, weights: LossWeights) -> Result<Self> {
        snippet.validate()?;
        weights.validate()?;
        let n = snippet.len();
        if poses.n_frames() != n {
            return Err(Error::MissingPose(poses.n_frames().min(n), poses.n_frames().max(n) - 1));
        }
        let k = &snippet.intrinsics;
        if (k.width >> (weights.n_scales - 1)) == 0 || (k.height >> (weights.n_scales - 1)) == 0 {
            return Err(Error::InvalidArgument(format!(
                "{}x{} is too small for {} scales",
                k.width, k.height, weights.n_scales
            )));
        }
        let mut levels = vec![Level {
            camera: FisheyeCamera::new(*k)?,
            images: snippet.frames.iter().map(|f| f.image.clone()).collect(),
        }];
        for _ in 1..weights.n_scales {
            let prev = levels.last().unwrap();
            levels.push(Level {
                camera: prev.camera.downsampled()?,
                images: prev.images.iter().map(Image::downsample2).collect(),
            });
        }
        Ok(Self { weights, poses: poses.clone(), levels, schedule: schedule(n) })
    }

    pub fn weights(&self) -> &LossWeights {
        &self.weights
    }

    pub fn poses(&self) -> &PoseSet {
        &self.poses
    }

    pub fn n_frames(&self) -> usize {
        self.poses.n_frames()
    }

    pub fn camera(&self, level: usize) -> &FisheyeCamera {
        &self.levels[level].camera
    }

    /// Evaluates full-resolution distance maps, building their pyramids.
    pub fn evaluate(&self, maps: &[DistanceMap], opts: &EvalOptions) -> Result<Evaluation> {
        let pyramids: Vec<Vec<DistanceMap>> = maps.iter().map(|d| d.pyramid(self.levels.len())).collect();
        self.evaluate_pyramids(&pyramids, opts)
    }

    /// `pyramids[frame][level]`. Gradients are pulled back to level 0
    /// through the 2x2 averaging, so they are only meaningful when the
    /// coarser levels were built that way.
    pub fn evaluate_pyramids(&self, pyramids: &[Vec<DistanceMap>], opts: &EvalOptions) -> Result<Evaluation> {
        if pyramids.len() != self.n_frames() {
            return Err(Error::DimensionMismatch(format!(
                "{} distance pyramids for {} frames",
                pyramids.len(),
                self.n_frames()
            )));
        }
        for (f, pyr) in pyramids.iter().enumerate() {
            if pyr.len() != self.levels.len() {
                return Err(Error::DimensionMismatch(format!("pyramid {f} has {} levels", pyr.len())));
            }
            for (level, d) in self.levels.iter().zip(pyr) {
                if d.width() != level.camera.width() || d.height() != level.camera.height() {
                    return Err(Error::DimensionMismatch(format!(
                        "frame {f}: {}x{} map at a {}x{} level",
                        d.width(),
                        d.height(),
                        level.camera.width(),
                        level.camera.height()
                    )));
                }
            }
        }
        if let Some(p) = &opts.pinned_thresholds {
            if p.len() != 2 * self.levels.len() {
                return Err(Error::InvalidArgument(format!("expected {} pinned thresholds", 2 * self.levels.len())));
            }
        }
        let mut fp = DefaultHasher::new();
        let mut scales = Vec::with_capacity(self.levels.len());
        let mut thresholds = Vec::with_capacity(2 * self.levels.len());
        let mut diagnostics = opts.diagnostics.then(Diagnostics::default);
        let mut grad_down: Option<Vec<Vec<f64>>> = None;
        for n in (0..self.levels.len()).rev() {
            let maps: Vec<&[f64]> = pyramids.iter().map(|p| p[n].data()).collect();
            let mut grads = opts.gradient.then(|| vec![vec![0.0; maps[0].len()]; maps.len()]);
            if let (Some(g), Some(coarse)) = (grads.as_mut(), grad_down.take()) {
                pull_back(&coarse, g, &self.levels[n + 1].camera, &self.levels[n].camera);
            }
            let pinned = |dir: usize| opts.pinned_thresholds.as_ref().and_then(|p| p[2 * n + dir]);
            let diag = if n == 0 { diagnostics.as_mut() } else { None };
            let (losses, thr) = self.eval_level(n, &maps, opts.automask, [pinned(0), pinned(1)], &mut fp, grads.as_mut(), diag)?;
            scales.push(losses);
            thresholds.push(thr);
            grad_down = grads;
        }
        scales.reverse();
        thresholds.reverse();
        let mut report = LossReport {
            total: 0.0,
            scales,
            beta: self.weights.beta,
            gamma: self.weights.gamma,
            decay_smoothness: self.weights.decay_smoothness,
            diagnostics,
        };
        report.total = report.recompute_total();
        Ok(Evaluation {
            report,
            gradient: grad_down,
            thresholds: thresholds.into_iter().flatten().collect(),
            fingerprint: fp.finish(),
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn eval_level(
        &self,
        n: usize,
        maps: &[&[f64]],
        use_automask: bool,
        pinned: [Option<f64>; 2],
        fp: &mut DefaultHasher,
        mut grads: Option<&mut Vec<Vec<f64>>>,
        mut diag: Option<&mut Diagnostics>,
    ) -> Result<(ScaleLosses, [Option<f64>; 2])> {
        let level = &self.levels[n];
        let cam = &level.camera;
        let (w, h) = (cam.width(), cam.height());
        let wt = &self.weights;
        let scale_w = LossReport::scale_weight(n);
        let mut photometric = [0.0; 2];
        let mut thr = [None; 2];
        for dir in 0..2 {
            let mut evals: Vec<(usize, Vec<SourceEval>, Mask)> = Vec::new();
            for (t, sources) in &self.schedule[dir] {
                let target = &level.images[*t];
                let mut per_source = Vec::with_capacity(sources.len());
                for &s in sources {
                    let warp = dense_warp(cam, maps[*t], &self.poses.pair(*t, s)?);
                    let (recon, ego) = reconstruct(&level.images[s], &warp, w, h);
                    let pe = photometric_error(target, &recon, &ego, wt.alpha)?;
                    per_source.push(SourceEval { source: s, warp, recon, ego, pe });
                }
                let omega = if use_automask {
                    let unwarped = per_source
                        .iter()
                        .map(|e| photometric_error(target, &level.images[e.source], &e.ego, wt.alpha))
                        .collect::<Result<Vec<_>>>()?;
                    let warped: Vec<&PixelMap> = per_source.iter().map(|e| &e.pe).collect();
                    omega_from_errors(&warped, &unwarped.iter().collect::<Vec<_>>())
                } else {
                    Mask::filled(w, h, true)
                };
                evals.push((*t, per_source, omega));
            }
            let inputs: Vec<(Vec<&PixelMap>, &Mask)> =
                evals.iter().map(|(_, ps, om)| (ps.iter().map(|e| &e.pe).collect(), om)).collect();
            let red = reduce_min_clipped(&inputs, wt.clip_percentile, pinned[dir]);
            photometric[dir] = red.value;
            thr[dir] = red.threshold;

            for (ti, (t, per_source, omega)) in evals.iter().enumerate() {
                let target = &level.images[*t];
                for e in per_source {
                    for c in &e.warp.cells {
                        match c {
                            Some(c) => fp.write_usize(1 + c.y0 * w + c.x0),
                            None => fp.write_usize(0),
                        }
                    }
                    let nc = target.channels();
                    for (p, &ok) in e.ego.data().iter().enumerate() {
                        if ok {
                            for c in 0..nc {
                                let d = e.recon.data()[p * nc + c] - target.data()[p * nc + c];
                                fp.write_i8(d.partial_cmp(&0.0).map_or(2, |o| o as i8));
                            }
                        }
                    }
                }
                for (p, &o) in omega.data().iter().enumerate() {
                    fp.write_u8(o as u8 | (red.clipped[ti][p] as u8) << 1);
                    fp.write_usize(red.argmin[ti][p].map_or(0, |s| s + 1));
                }
                if let Some(g) = grads.as_deref_mut() {
                    for (k, e) in per_source.iter().enumerate() {
                        let up = &red.weights[ti][k];
                        if up.iter().all(|&x| x == 0.0) {
                            continue;
                        }
                        let g_recon = photometric_backward(target, &e.recon, e.ego.data(), wt.alpha, up);
                        let src = &level.images[e.source];
                        accumulate_flow_gradient(&mut g[*t], &g_recon, &e.warp, src, scale_w);
                    }
                }
                if let Some(d) = diag.as_deref_mut() {
                    for e in per_source {
                        d.pairs.push(PairDiagnostics {
                            target: *t,
                            source: e.source,
                            backward: dir == 1,
                            pe: e.pe.clone(),
                            ego: e.ego.clone(),
                        });
                    }
                    d.omega.push((*t, dir == 1, omega.clone()));
                }
            }
        }

        let smooth_w = if wt.decay_smoothness { scale_w } else { 1.0 } * wt.beta / maps.len() as f64;
        let mut smoothness = 0.0;
        for (f, d) in maps.iter().enumerate() {
            let (v, g, signs) = smoothness_terms(d, &level.images[f], grads.is_some());
            smoothness += v;
            for s in signs {
                fp.write_i8(s);
            }
            if let Some(gs) = grads.as_deref_mut() {
                for (a, b) in gs[f].iter_mut().zip(&g) {
                    *a += smooth_w * b;
                }
            }
        }
        smoothness /= maps.len() as f64;

        let dc = csdc_terms(cam, maps, &self.poses, grads.is_some(), fp)?;
        if let Some(gs) = grads {
            let k = scale_w * wt.gamma;
            for (a, b) in gs.iter_mut().zip(&dc.grads) {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += k * y;
                }
            }
        }
        let losses = ScaleLosses {
            photometric_forward: photometric[0],
            photometric_backward: photometric[1],
            smoothness,
            csdc: dc.value,
        };
        Ok((losses, thr))
    }
}

/// Bilinear reconstruction of the target from `src` and the ego mask.
fn reconstruct(src: &Image, warp: &DenseWarp, w: usize, h: usize) -> (Image, Mask) {
    let nc = src.channels();
    let mut data = vec![0.0; w * h * nc];
    for (p, cell) in warp.cells.iter().enumerate() {
        if let Some(cell) = cell {
            for c in 0..nc {
                data[p * nc + c] = cell.sample(w, |j| src.data()[j * nc + c]).0;
            }
        }
    }
    let valid = warp.cells.iter().map(Option::is_some).collect();
    (Image::from_raw(w, h, nc, data), Mask::new(w, h, valid).expect("sizes agree"))
}

/// Chain rule from reconstruction gradients to target distances.
fn accumulate_flow_gradient(g: &mut [f64], g_recon: &[f64], warp: &DenseWarp, src: &Image, scale: f64) {
    let (w, nc) = (src.width(), src.channels());
    for (p, cell) in warp.cells.iter().enumerate() {
        let Some(cell) = cell else { continue };
        let [fu, fv] = warp.flow_grad[p];
        if fu == 0.0 && fv == 0.0 {
            continue;
        }
        let mut acc = 0.0;
        for c in 0..nc {
            let gr = g_recon[p * nc + c];
            if gr != 0.0 {
                let (_, du, dv) = cell.sample(w, |j| src.data()[j * nc + c]);
                acc += gr * (du * fu + dv * fv);
            }
        }
        g[p] += scale * acc;
    }
}

/// Adds the gradient of a level to the finer level that averaged into it.
fn pull_back(coarse: &[Vec<f64>], fine: &mut [Vec<f64>], coarse_cam: &FisheyeCamera, fine_cam: &FisheyeCamera) {
    let (cw, ch, fw) = (coarse_cam.width(), coarse_cam.height(), fine_cam.width());
    for (c, f) in coarse.iter().zip(fine.iter_mut()) {
        for v in 0..ch {
            for u in 0..cw {
                let g = 0.25 * c[v * cw + u];
                for (du, dv) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                    f[(2 * v + dv) * fw + 2 * u + du] += g;
                }
            }
        }
    }
}

/// Full objective for the given distance pyramids, with the static-pixel
/// mask active.
pub fn total_loss(
    snippet: &SequenceSnippet,
    pyramids: &[Vec<DistanceMap>],
    poses: &PoseSet,
    weights: &LossWeights,
) -> Result<LossReport> {
    let objective = Objective::new(snippet, poses, *weights)?;
    Ok(objective.evaluate_pyramids(pyramids, &EvalOptions::default())?.report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedules() {
        assert_eq!(schedule(2), [vec![(0, vec![1])], vec![(1, vec![0])]]);
        assert_eq!(schedule(3), [vec![(1, vec![0, 2])], vec![(0, vec![1]), (2, vec![1])]]);
        let s = schedule(4);
        assert_eq!(s[0].len(), 2);
        assert_eq!(s[1].len(), 4);
    }

    #[test]
    fn report_total_reproduces() {
        let report = LossReport {
            total: 0.0,
            scales: vec![
                ScaleLosses { photometric_forward: 0.1, photometric_backward: 0.2, smoothness: 0.3, csdc: 0.4 },
                ScaleLosses { photometric_forward: 1.0, ..Default::default() },
            ],
            beta: 0.001,
            gamma: 0.001,
            decay_smoothness: false,
            diagnostics: None,
        };
        let expected = 0.1 + 0.2 + 0.001 * 0.4 + 0.001 * 0.3 + 0.5 * 1.0;
        assert!((report.recompute_total() - expected).abs() < 1e-15);
        assert!((report.photometric() - 0.8).abs() < 1e-15);
    }
}
