use super::ssim::{ssim, ssim_backward};
use super::{nearest_rank, PixelMap};
use crate::error::{Error, Result};
use crate::image::{Image, Mask};

/// `alpha (1 - SSIM) / 2 + (1 - alpha) |I_t - I_hat|`, channel-averaged,
/// defined only where `mask` is set.
pub fn photometric_error(target: &Image, recon: &Image, mask: &Mask, alpha: f64) -> Result<PixelMap> {
    let s = ssim(target, recon, mask)?;
    let nc = target.channels();
    let (td, rd) = (target.data(), recon.data());
    let values = s
        .values
        .iter()
        .enumerate()
        .map(|(p, &sv)| {
            if !s.valid[p] {
                return 0.0;
            }
            let l1 = (0..nc).map(|c| (td[p * nc + c] - rd[p * nc + c]).abs()).sum::<f64>() / nc as f64;
            alpha * (1.0 - sv) / 2.0 + (1.0 - alpha) * l1
        })
        .collect();
    Ok(PixelMap { width: s.width, height: s.height, values, valid: s.valid })
}

/// `dL/dI_hat` per pixel and channel from `upstream[p] = dL/dpe(p)`.
pub(crate) fn photometric_backward(target: &Image, recon: &Image, mask: &[bool], alpha: f64, upstream: &[f64]) -> Vec<f64> {
    let nc = target.channels();
    let ssim_up: Vec<f64> = upstream.iter().map(|g| -0.5 * alpha * g).collect();
    let mut grad = ssim_backward(target, recon, mask, &ssim_up);
    let (td, rd) = (target.data(), recon.data());
    for (p, &g) in upstream.iter().enumerate() {
        if !mask[p] || g == 0.0 {
            continue;
        }
        for c in 0..nc {
            let diff = rd[p * nc + c] - td[p * nc + c];
            let sign = if diff > 0.0 {
                1.0
            } else if diff < 0.0 {
                -1.0
            } else {
                0.0
            };
            grad[p * nc + c] += g * (1.0 - alpha) * sign / nc as f64;
        }
    }
    grad
}

/// Per-pixel minimum over sources followed by percentile clipping, pooled
/// over one or more targets.
#[derive(Debug, Clone)]
pub(crate) struct MinReduction {
    pub value: f64,
    pub count: usize,
    pub threshold: Option<f64>,
    /// `[target][source][pixel]` derivative of `value` with respect to pe.
    pub weights: Vec<Vec<Vec<f64>>>,
    /// `[target][pixel]` winning source, if the pixel is supervised.
    pub argmin: Vec<Vec<Option<usize>>>,
    /// `[target][pixel]` true when the clipped value is in use.
    pub clipped: Vec<Vec<bool>>,
}

/// Lowest source index wins ties. Values at or above the threshold are
/// replaced by it and receive no gradient. A pinned threshold overrides the
/// percentile estimate.
pub(crate) fn reduce_min_clipped(
    targets: &[(Vec<&PixelMap>, &Mask)],
    clip_percentile: f64,
    pinned: Option<f64>,
) -> MinReduction {
    let mut argmin = Vec::with_capacity(targets.len());
    let mut minima = Vec::with_capacity(targets.len());
    let mut pool = Vec::new();
    for (maps, omega) in targets {
        let n = omega.data().len();
        let mut am = vec![None; n];
        let mut mv = vec![0.0; n];
        for p in 0..n {
            if !omega.data()[p] {
                continue;
            }
            let mut best: Option<(usize, f64)> = None;
            for (s, map) in maps.iter().enumerate() {
                if map.valid[p] && best.is_none_or(|(_, b)| map.values[p] < b) {
                    best = Some((s, map.values[p]));
                }
            }
            if let Some((s, v)) = best {
                am[p] = Some(s);
                mv[p] = v;
                pool.push(v);
            }
        }
        argmin.push(am);
        minima.push(mv);
    }
    let count = pool.len();
    let threshold = match (count, pinned) {
        (0, _) => None,
        (_, Some(t)) => Some(t),
        (_, None) => Some(nearest_rank(&mut pool, clip_percentile)),
    };
    let mut sum = 0.0;
    let mut weights = Vec::with_capacity(targets.len());
    let mut clipped = Vec::with_capacity(targets.len());
    for ((maps, omega), (am, mv)) in targets.iter().zip(argmin.iter().zip(&minima)) {
        let n = omega.data().len();
        let mut w = vec![vec![0.0; n]; maps.len()];
        let mut cl = vec![false; n];
        for p in 0..n {
            if let (Some(s), Some(t)) = (am[p], threshold) {
                if mv[p] < t {
                    sum += mv[p];
                    w[s][p] = 1.0 / count as f64;
                } else {
                    sum += t;
                    cl[p] = true;
                }
            }
        }
        weights.push(w);
        clipped.push(cl);
    }
    let value = if count > 0 { sum / count as f64 } else { 0.0 };
    MinReduction { value, count, threshold, weights, argmin, clipped }
}

/// Masked mean of the per-pixel minimum over sources, clipped at the given
/// percentile. Pixels count when `omega` is set and at least one source is valid.
pub fn min_reprojection(pe: &[PixelMap], omega: &Mask, clip_percentile: f64) -> Result<f64> {
    if pe.is_empty() {
        return Err(Error::InvalidArgument("need at least one source error map".into()));
    }
    if pe.iter().any(|m| m.width != omega.width() || m.height != omega.height()) {
        return Err(Error::DimensionMismatch("error maps and mask differ in size".into()));
    }
    let r = reduce_min_clipped(&[(pe.iter().collect(), omega)], clip_percentile, None);
    if r.count == 0 {
        return Err(Error::NoSupervisedPixels);
    }
    Ok(r.value)
}

/// Static-pixel mask: set where the best warped reconstruction beats the best
/// unwarped source (strictly). `masks` are the ego masks of each source;
/// both sides use them for their SSIM windows.
pub fn automask(target: &Image, sources: &[&Image], recons: &[&Image], masks: &[&Mask], alpha: f64) -> Result<Mask> {
    if sources.len() != recons.len() || sources.len() != masks.len() || sources.is_empty() {
        return Err(Error::DimensionMismatch("automask needs one reconstruction and mask per source".into()));
    }
    let warped = recons
        .iter()
        .zip(masks)
        .map(|(r, m)| photometric_error(target, r, m, alpha))
        .collect::<Result<Vec<_>>>()?;
    let unwarped = sources
        .iter()
        .zip(masks)
        .map(|(s, m)| photometric_error(target, s, m, alpha))
        .collect::<Result<Vec<_>>>()?;
    Ok(omega_from_errors(&warped.iter().collect::<Vec<_>>(), &unwarped.iter().collect::<Vec<_>>()))
}

pub(crate) fn omega_from_errors(warped: &[&PixelMap], unwarped: &[&PixelMap]) -> Mask {
    let (w, h) = (warped[0].width, warped[0].height);
    let min_valid = |maps: &[&PixelMap], p: usize| {
        maps.iter().filter(|m| m.valid[p]).map(|m| m.values[p]).fold(f64::INFINITY, f64::min)
    };
    let data = (0..w * h)
        .map(|p| {
            let a = min_valid(warped, p);
            a.is_finite() && a < min_valid(unwarped, p)
        })
        .collect();
    Mask::new(w, h, data).expect("sizes agree")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant_map(w: usize, h: usize, v: f64) -> PixelMap {
        PixelMap { width: w, height: h, values: vec![v; w * h], valid: vec![true; w * h] }
    }

    fn noise(w: usize, h: usize, seed: u64) -> Image {
        let mut s = seed;
        Image::from_fn(w, h, |_, _| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 11) as f64 / (1u64 << 53) as f64
        })
    }

    #[test]
    fn identical_images_have_zero_error() {
        let a = noise(6, 5, 4);
        let pe = photometric_error(&a, &a, &Mask::filled(6, 5, true), 0.85).unwrap();
        assert!(pe.values.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn pure_l1_and_bounds() {
        let a = Image::filled(4, 4, 1, 0.2);
        let b = Image::filled(4, 4, 1, 0.5);
        let pe = photometric_error(&a, &b, &Mask::filled(4, 4, true), 0.0).unwrap();
        assert!(pe.values.iter().all(|v| (v - 0.3).abs() < 1e-12));

        let x = noise(8, 8, 1);
        let y = noise(8, 8, 2);
        let pe = photometric_error(&x, &y, &Mask::filled(8, 8, true), 1.0).unwrap();
        assert!(pe.values.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn min_reprojection_examples() {
        let omega = Mask::filled(4, 4, true);
        let a = constant_map(4, 4, 0.2);
        let b = constant_map(4, 4, 0.4);
        let zero = constant_map(4, 4, 0.0);
        assert!((min_reprojection(&[a.clone(), b.clone()], &omega, 95.0).unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(min_reprojection(&[b.clone(), zero], &omega, 95.0).unwrap(), 0.0);
        assert!((min_reprojection(&[b], &omega, 95.0).unwrap() - 0.4).abs() < 1e-15);
        assert!(matches!(
            min_reprojection(&[a], &Mask::filled(4, 4, false), 95.0),
            Err(Error::NoSupervisedPixels)
        ));
    }

    #[test]
    fn clipping_caps_outliers() {
        let mut values = vec![0.1; 20];
        values[3] = 5.0;
        let map = PixelMap { width: 20, height: 1, values, valid: vec![true; 20] };
        let omega = Mask::filled(20, 1, true);
        // rank ceil(0.95 * 20) = 19 -> threshold 0.1, the outlier is replaced by it
        assert!((min_reprojection(std::slice::from_ref(&map), &omega, 95.0).unwrap() - 0.1).abs() < 1e-15);
        let r = reduce_min_clipped(&[(vec![&map], &omega)], 95.0, None);
        assert_eq!(r.weights[0][0][3], 0.0);
        assert!(r.clipped[0][3]);
    }

    #[test]
    fn static_sequence_masks_everything() {
        let t = noise(8, 8, 5);
        let m = Mask::filled(8, 8, true);
        let omega = automask(&t, &[&t, &t], &[&t, &t], &[&m, &m], 0.85).unwrap();
        assert_eq!(omega.count(), 0);
    }

    #[test]
    fn worse_reconstruction_is_masked() {
        let t = noise(8, 8, 5);
        let worse = noise(8, 8, 6);
        let m = Mask::filled(8, 8, true);
        let omega = automask(&t, &[&t], &[&worse], &[&m], 0.85).unwrap();
        assert_eq!(omega.count(), 0);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let t = noise(5, 5, 7);
        let r = noise(5, 5, 8);
        let mask: Vec<bool> = (0..25).map(|i| i % 6 != 2).collect();
        let m = Mask::new(5, 5, mask.clone()).unwrap();
        let up: Vec<f64> = (0..25).map(|i| 0.5 - 0.03 * i as f64).collect();
        let loss = |r: &Image| -> f64 {
            let pe = photometric_error(&t, r, &m, 0.85).unwrap();
            (0..25).filter(|&p| mask[p]).map(|p| pe.values[p] * up[p]).sum()
        };
        let g = photometric_backward(&t, &r, &mask, 0.85, &up);
        for q in [0, 4, 12, 24] {
            let h = 1e-7;
            let mut rp = r.data().to_vec();
            let mut rm = r.data().to_vec();
            rp[q] += h;
            rm[q] -= h;
            let fd = (loss(&Image::from_raw(5, 5, 1, rp)) - loss(&Image::from_raw(5, 5, 1, rm))) / (2.0 * h);
            assert!((fd - g[q]).abs() < 1e-6 * (1.0 + fd.abs()), "q={q}");
        }
    }
}
