//! Self-supervised training objective.
//!
//! Per scale `n` the loss is `L_p^f + L_p^b + gamma L_dc + beta L_s`, and the
//! scales are combined with weight `1 / 2^(n-1)`. Every term provides its
//! analytic gradient with respect to the distance maps.

mod csdc;
mod objective;
mod photometric;
mod smoothness;
mod ssim;

use serde::{Deserialize, Serialize};

pub use csdc::csdc_loss;
pub use objective::{
    total_loss, Diagnostics, EvalOptions, Evaluation, LossReport, Objective, PairDiagnostics, ScaleLosses,
};
pub use photometric::{automask, min_reprojection, photometric_error};
pub use smoothness::smoothness_loss;
pub use ssim::{ssim, SSIM_C1, SSIM_C2};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    /// SSIM share of the photometric error.
    pub alpha: f64,
    /// Edge-aware smoothness weight.
    pub beta: f64,
    /// Cross-sequence distance consistency weight.
    pub gamma: f64,
    pub clip_percentile: f64,
    pub n_scales: usize,
    /// Optimiser iterations before the static-pixel mask is switched on.
    pub automask_warmup: usize,
    /// When false, the smoothness term keeps full weight at every scale.
    pub decay_smoothness: bool,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            alpha: 0.85,
            beta: 0.001,
            gamma: 0.001,
            clip_percentile: 95.0,
            n_scales: 4,
            automask_warmup: 200,
            decay_smoothness: true,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidArgument(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        if !(self.beta >= 0.0 && self.gamma >= 0.0) {
            return Err(Error::InvalidArgument("loss weights must be non-negative".into()));
        }
        if !(self.clip_percentile > 0.0 && self.clip_percentile <= 100.0) {
            return Err(Error::InvalidArgument(format!(
                "clip percentile must lie in (0, 100], got {}",
                self.clip_percentile
            )));
        }
        if !(2..=4).contains(&self.n_scales) {
            return Err(Error::InvalidArgument(format!("n_scales must be 2..=4, got {}", self.n_scales)));
        }
        Ok(())
    }
}

/// Per-pixel scalar with a validity flag (pe maps, SSIM maps).
#[derive(Debug, Clone, PartialEq)]
pub struct PixelMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
    pub valid: Vec<bool>,
}

impl PixelMap {
    pub fn get(&self, u: usize, v: usize) -> Option<f64> {
        let i = v * self.width + u;
        self.valid[i].then(|| self.values[i])
    }

    pub fn valid_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().zip(&self.valid).filter(|(_, &ok)| ok).map(|(&v, _)| v)
    }
}

/// Nearest-rank percentile (`p` in percent) of a non-empty sample.
pub(crate) fn nearest_rank(values: &mut [f64], p: f64) -> f64 {
    debug_assert!(!values.is_empty());
    values.sort_by(|a, b| a.total_cmp(b));
    let rank = ((p / 100.0) * values.len() as f64).ceil() as usize;
    values[rank.clamp(1, values.len()) - 1]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_rank_percentiles() {
        let mut v: Vec<f64> = (1..=20).rev().map(f64::from).collect();
        assert_eq!(nearest_rank(&mut v, 95.0), 19.0);
        assert_eq!(nearest_rank(&mut v, 100.0), 20.0);
        assert_eq!(nearest_rank(&mut [3.0], 95.0), 3.0);
    }

    #[test]
    fn weights_validation() {
        assert!(LossWeights::default().validate().is_ok());
        assert!(LossWeights { alpha: 1.5, ..Default::default() }.validate().is_err());
        assert!(LossWeights { n_scales: 5, ..Default::default() }.validate().is_err());
        assert!(LossWeights { beta: -1.0, ..Default::default() }.validate().is_err());
    }
}
