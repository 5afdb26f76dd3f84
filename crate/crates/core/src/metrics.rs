//! Depth-style error metrics over capped ground-truth distances.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::DistanceMap;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub abs_rel: f64,
    pub sq_rel: f64,
    pub rmse: f64,
    pub rmse_log: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
    pub n_pixels: usize,
    pub cap: f64,
    pub median_scaled: bool,
}

/// Evaluation caps in metres.
pub fn cap_presets() -> [f64; 3] {
    [30.0, 40.0, 80.0]
}

/// Lower-middle element for even counts.
fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    values[(values.len() - 1) / 2]
}

/// Compares `pred` with `gt` on pixels where `0 < gt <= cap`.
pub fn evaluate(pred: &DistanceMap, gt: &DistanceMap, cap: f64, median_scale: bool) -> Result<MetricsReport> {
    if pred.width() != gt.width() || pred.height() != gt.height() {
        return Err(Error::DimensionMismatch(format!(
            "prediction {}x{} vs ground truth {}x{}",
            pred.width(),
            pred.height(),
            gt.width(),
            gt.height()
        )));
    }
    evaluate_values(pred.data(), gt.data(), cap, median_scale)
}

/// As [`evaluate`] on raw values; ground truth may hold zeros or negatives
/// for missing pixels.
pub fn evaluate_values(pred: &[f64], gt: &[f64], cap: f64, median_scale: bool) -> Result<MetricsReport> {
    if pred.len() != gt.len() {
        return Err(Error::DimensionMismatch(format!("{} predictions vs {} ground-truth values", pred.len(), gt.len())));
    }
    if cap.is_nan() || cap <= 0.0 {
        return Err(Error::InvalidArgument(format!("cap must be positive, got {cap}")));
    }
    if let Some(&bad) = pred.iter().zip(gt).find(|(&p, &g)| g > 0.0 && g <= cap && !(p > 0.0 && p.is_finite())).map(|(p, _)| p) {
        return Err(Error::InvalidDistance(bad));
    }
    let (mut p, g): (Vec<f64>, Vec<f64>) = pred
        .iter()
        .zip(gt)
        .filter(|(_, &g)| g > 0.0 && g <= cap)
        .map(|(&p, &g)| (p, g))
        .unzip();
    if g.is_empty() {
        return Err(Error::NoSupervisedPixels);
    }
    if median_scale {
        let ratio = median(&mut g.clone()) / median(&mut p.clone());
        p.iter_mut().for_each(|x| *x *= ratio);
    }
    let n = g.len() as f64;
    let (mut abs_rel, mut sq_rel, mut sq, mut sq_log) = (0.0, 0.0, 0.0, 0.0);
    let mut within = [0usize; 3];
    for (&p, &g) in p.iter().zip(&g) {
        let d = p - g;
        abs_rel += d.abs() / g;
        sq_rel += d * d / g;
        sq += d * d;
        let dl = p.ln() - g.ln();
        sq_log += dl * dl;
        let ratio = (p / g).max(g / p);
        for (k, w) in within.iter_mut().enumerate() {
            if ratio < 1.25f64.powi(k as i32 + 1) {
                *w += 1;
            }
        }
    }
    Ok(MetricsReport {
        abs_rel: abs_rel / n,
        sq_rel: sq_rel / n,
        rmse: (sq / n).sqrt(),
        rmse_log: (sq_log / n).sqrt(),
        delta1: within[0] as f64 / n,
        delta2: within[1] as f64 / n,
        delta3: within[2] as f64 / n,
        n_pixels: g.len(),
        cap,
        median_scaled: median_scale,
    })
}
