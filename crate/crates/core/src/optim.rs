//! Direct per-pixel distance optimisation against the full objective, and
//! finite-difference gradient checking.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::DistanceMap;
use crate::losses::{EvalOptions, LossReport, LossWeights, Objective};
use crate::se3::{PoseSet, MIN_BASELINE};
use crate::synth::SequenceSnippet;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimConfig {
    pub iterations: usize,
    /// Step per iteration. Gradients are multiplied by the pixel count first,
    /// so the step does not depend on resolution.
    pub step_size: f64,
    /// Constant initial distance in metres.
    pub init_distance: f64,
    pub weights: LossWeights,
    pub optimize_log_distance: bool,
    /// Relative uniform jitter applied to the initial map.
    pub init_noise: f64,
    pub seed: u64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            iterations: 2000,
            step_size: 0.5,
            init_distance: 5.0,
            weights: LossWeights::default(),
            optimize_log_distance: true,
            init_noise: 0.0,
            seed: 0,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::InvalidArgument("iterations must be at least 1".into()));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::InvalidArgument(format!("step size must be positive, got {}", self.step_size)));
        }
        if !(self.init_distance > 0.0 && self.init_distance.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "initial distance must be positive, got {}",
                self.init_distance
            )));
        }
        if !(0.0..1.0).contains(&self.init_noise) {
            return Err(Error::InvalidArgument("init noise must lie in [0, 1)".into()));
        }
        self.weights.validate()
    }
}

/// Smallest distance the linear parameterisation may reach.
const MIN_DISTANCE: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct OptimOutcome {
    pub distances: Vec<DistanceMap>,
    /// Loss at every iterate, the last entry being the returned maps.
    pub trace: Vec<LossReport>,
}

/// `dL/dD` for every frame at full resolution, static-pixel mask active.
pub fn loss_gradient(
    snippet: &SequenceSnippet,
    maps: &[DistanceMap],
    poses: &PoseSet,
    weights: &LossWeights,
) -> Result<Vec<Vec<f64>>> {
    let objective = Objective::new(snippet, poses, *weights)?;
    let eval = objective.evaluate(maps, &EvalOptions { gradient: true, ..Default::default() })?;
    Ok(eval.gradient.expect("gradient requested"))
}

/// Gradient descent on the distance maps of every frame, starting from a
/// constant map. The static-pixel mask switches on after the warmup.
pub fn optimize_distance(snippet: &SequenceSnippet, poses: &PoseSet, cfg: &OptimConfig) -> Result<OptimOutcome> {
    optimize_from(snippet, poses, cfg, None)
}

/// As [`optimize_distance`], starting from the given maps instead.
pub fn optimize_from(
    snippet: &SequenceSnippet,
    poses: &PoseSet,
    cfg: &OptimConfig,
    init: Option<&[DistanceMap]>,
) -> Result<OptimOutcome> {
    cfg.validate()?;
    let baseline = poses.min_baseline();
    if baseline.is_nan() || baseline <= MIN_BASELINE {
        return Err(Error::DegenerateBaseline(baseline));
    }
    let objective = Objective::new(snippet, poses, cfg.weights)?;
    let k = &snippet.intrinsics;
    let (w, h) = (k.width, k.height);
    let npix = (w * h) as f64;
    let mut maps: Vec<Vec<f64>> = match init {
        Some(m) => {
            if m.len() != snippet.len() || m.iter().any(|d| d.width() != w || d.height() != h) {
                return Err(Error::DimensionMismatch("initial maps do not match the snippet".into()));
            }
            m.iter().map(|d| d.data().to_vec()).collect()
        }
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            (0..snippet.len())
                .map(|_| {
                    (0..w * h)
                        .map(|_| {
                            let jitter = if cfg.init_noise > 0.0 { rng.gen_range(-cfg.init_noise..cfg.init_noise) } else { 0.0 };
                            cfg.init_distance * (1.0 + jitter)
                        })
                        .collect()
                })
                .collect()
        }
    };
    let mut trace = Vec::with_capacity(cfg.iterations + 1);
    for it in 0..=cfg.iterations {
        let current: Vec<DistanceMap> = maps.iter().map(|m| DistanceMap::new(w, h, m.clone())).collect::<Result<_>>()?;
        let opts = EvalOptions {
            automask: it >= cfg.weights.automask_warmup,
            gradient: it < cfg.iterations,
            ..Default::default()
        };
        let eval = objective.evaluate(&current, &opts)?;
        trace.push(eval.report);
        let Some(grad) = eval.gradient else { break };
        for (m, g) in maps.iter_mut().zip(&grad) {
            for (d, gd) in m.iter_mut().zip(g) {
                if cfg.optimize_log_distance {
                    *d *= (-cfg.step_size * npix * gd * *d).exp();
                } else {
                    *d = (*d - cfg.step_size * npix * gd).max(MIN_DISTANCE);
                }
            }
        }
    }
    let distances = maps.into_iter().map(|m| DistanceMap::new(w, h, m)).collect::<Result<_>>()?;
    Ok(OptimOutcome { distances, trace })
}

/// Loss value and selection fingerprint at one parameter vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Probe {
    pub value: f64,
    /// Entries whose neighbourhood changes this are skipped.
    pub fingerprint: u64,
}

impl From<f64> for Probe {
    fn from(value: f64) -> Self {
        Probe { value, fingerprint: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradCheckConfig {
    pub epsilon: f64,
    pub samples: usize,
    pub seed: u64,
    /// Magnitudes below this count as zero when forming relative errors.
    pub abs_floor: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self { epsilon: 1e-6, samples: 50, seed: 0, abs_floor: 1e-10 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradEntry {
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub worst_rel_error: f64,
    pub median_rel_error: f64,
    /// Parameter index of the worst entry.
    pub worst_index: usize,
    /// Entries skipped because a discrete selection changed within epsilon.
    pub skipped: usize,
    pub entries: Vec<GradEntry>,
}

/// Central differences at up to `samples` randomly chosen entries of `x`
/// whose fingerprint is unchanged at `x +- epsilon`.
pub fn grad_check<F, P>(f: F, x: &[f64], gradient: &[f64], cfg: &GradCheckConfig) -> Result<GradCheckReport>
where
    F: Fn(&[f64]) -> Result<P>,
    P: Into<Probe>,
{
    if !(cfg.epsilon > 0.0 && cfg.epsilon.is_finite()) {
        return Err(Error::InvalidArgument(format!("epsilon must be positive, got {}", cfg.epsilon)));
    }
    if x.len() != gradient.len() || x.is_empty() {
        return Err(Error::DimensionMismatch("gradient and parameters differ in length".into()));
    }
    let base = f(x)?.into();
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
    let mut entries = Vec::with_capacity(cfg.samples);
    let mut skipped = 0;
    let mut probe = x.to_vec();
    for &i in &order {
        if entries.len() == cfg.samples {
            break;
        }
        probe[i] = x[i] + cfg.epsilon;
        let plus: Probe = f(&probe)?.into();
        probe[i] = x[i] - cfg.epsilon;
        let minus: Probe = f(&probe)?.into();
        probe[i] = x[i];
        if plus.fingerprint != base.fingerprint || minus.fingerprint != base.fingerprint {
            skipped += 1;
            continue;
        }
        let numeric = (plus.value - minus.value) / (2.0 * cfg.epsilon);
        let analytic = gradient[i];
        let scale = analytic.abs().max(numeric.abs());
        let rel_error = if scale < cfg.abs_floor { 0.0 } else { (analytic - numeric).abs() / scale };
        entries.push(GradEntry { index: i, analytic, numeric, rel_error });
    }
    if entries.is_empty() {
        return Err(Error::InvalidArgument("no selection-stable entries to check".into()));
    }
    let mut errs: Vec<f64> = entries.iter().map(|e| e.rel_error).collect();
    errs.sort_by(f64::total_cmp);
    let worst = entries.iter().max_by(|a, b| a.rel_error.total_cmp(&b.rel_error)).expect("non-empty");
    Ok(GradCheckReport {
        worst_rel_error: worst.rel_error,
        median_rel_error: errs[(errs.len() - 1) / 2],
        worst_index: worst.index,
        skipped,
        entries,
    })
}

/// Gradient check of the full objective with respect to every frame's
/// full-resolution distances, flattened frame by frame. Clip thresholds are
/// held at their values for `maps` so the checked function is the one the
/// analytic gradient describes.
pub fn grad_check_objective(
    objective: &Objective,
    maps: &[DistanceMap],
    automask: bool,
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport> {
    let opts = EvalOptions { automask, gradient: true, ..Default::default() };
    let base = objective.evaluate(maps, &opts)?;
    let gradient: Vec<f64> = base.gradient.expect("gradient requested").concat();
    let x: Vec<f64> = maps.iter().flat_map(|d| d.data().iter().copied()).collect();
    let pinned = EvalOptions { automask, pinned_thresholds: Some(base.thresholds.clone()), ..Default::default() };
    let (w, h) = (maps[0].width(), maps[0].height());
    let f = |x: &[f64]| -> Result<Probe> {
        let ms = x.chunks(w * h).map(|c| DistanceMap::new(w, h, c.to_vec())).collect::<Result<Vec<_>>>()?;
        let e = objective.evaluate(&ms, &pinned)?;
        Ok(Probe { value: e.report.total, fingerprint: e.fingerprint })
    };
    grad_check(f, &x, &gradient, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_matches() {
        let x: Vec<f64> = (0..30).map(|i| 0.3 * i as f64 - 2.0).collect();
        let g: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let f = |x: &[f64]| -> Result<f64> { Ok(x.iter().map(|v| v * v).sum()) };
        let r = grad_check(f, &x, &g, &GradCheckConfig { samples: 30, epsilon: 1e-3, ..Default::default() }).unwrap();
        assert_eq!(r.entries.len(), 30);
        assert!(r.worst_rel_error < 1e-8);
    }

    #[test]
    fn wrong_gradient_is_reported() {
        let x = vec![1.0, 2.0, 3.0];
        let g = vec![2.0, 4.0, 7.0];
        let f = |x: &[f64]| -> Result<f64> { Ok(x.iter().map(|v| v * v).sum()) };
        let r = grad_check(f, &x, &g, &GradCheckConfig::default()).unwrap();
        assert_eq!(r.worst_index, 2);
        assert!(r.worst_rel_error > 0.1);
    }

    #[test]
    fn zero_epsilon_is_rejected() {
        let f = |x: &[f64]| -> Result<f64> { Ok(x[0]) };
        let cfg = GradCheckConfig { epsilon: 0.0, ..Default::default() };
        assert!(grad_check(f, &[1.0], &[1.0], &cfg).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(OptimConfig::default().validate().is_ok());
        assert!(OptimConfig { iterations: 0, ..Default::default() }.validate().is_err());
        assert!(OptimConfig { step_size: 0.0, ..Default::default() }.validate().is_err());
        assert!(OptimConfig { init_distance: -1.0, ..Default::default() }.validate().is_err());
    }
}
