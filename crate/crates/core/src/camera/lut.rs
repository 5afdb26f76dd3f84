use super::FisheyeIntrinsics;
use crate::error::{Error, Result};

pub const DEFAULT_LUT_ENTRIES: usize = 4096;

/// Precomputed inverse of the radial polynomial on a uniform radius grid.
///
/// The table spans `[0, min(diagonal radius, rho(theta_max))]`; queries are
/// answered by linear interpolation between neighbouring roots.
#[derive(Debug, Clone)]
pub struct ThetaLut {
    step: f64,
    max_radius: f64,
    thetas: Vec<f64>,
}

impl ThetaLut {
    pub fn build(k: &FisheyeIntrinsics, n_entries: usize) -> Result<Self> {
        if n_entries < 2 {
            return Err(Error::InvalidArgument(format!(
                "lookup table needs at least 2 entries, got {n_entries}"
            )));
        }
        let max_radius = k.diagonal_radius().min(k.rho_max());
        let step = max_radius / (n_entries - 1) as f64;
        let thetas = (0..n_entries)
            .map(|i| {
                let rho = if i + 1 == n_entries { max_radius } else { step * i as f64 };
                k.solve_theta(rho)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { step, max_radius, thetas })
    }

    pub fn max_radius(&self) -> f64 {
        self.max_radius
    }

    pub fn len(&self) -> usize {
        self.thetas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thetas.is_empty()
    }

    /// `(rho_i, theta_i)` table entries.
    pub fn entries(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        let last = self.thetas.len() - 1;
        self.thetas.iter().enumerate().map(move |(i, &t)| {
            let rho = if i == last { self.max_radius } else { self.step * i as f64 };
            (rho, t)
        })
    }

    pub fn lookup(&self, rho: f64) -> Result<f64> {
        if !(rho >= 0.0 && rho <= self.max_radius) {
            return Err(Error::RadiusOutOfRange { radius: rho, max: self.max_radius });
        }
        let pos = rho / self.step;
        let last = self.thetas.len() - 1;
        let i = (pos.floor() as usize).min(last - 1);
        let lo = self.step * i as f64;
        let hi = if i + 1 == last { self.max_radius } else { self.step * (i + 1) as f64 };
        let f = (rho - lo) / (hi - lo);
        Ok(self.thetas[i] + f * (self.thetas[i + 1] - self.thetas[i]))
    }
}
