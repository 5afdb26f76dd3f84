use crate::error::{Error, Result};
use crate::image::{DistanceMap, Image};

#[inline]
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Channel-averaged absolute intensity difference between two pixels.
fn edge(img: &Image, p: usize, q: usize) -> f64 {
    let nc = img.channels();
    let d = img.data();
    (0..nc).map(|c| (d[q * nc + c] - d[p * nc + c]).abs()).sum::<f64>() / nc as f64
}

/// Edge-aware smoothness of the mean-normalised inverse distance.
pub fn smoothness_loss(d: &DistanceMap, img: &Image) -> Result<f64> {
    if d.width() != img.width() || d.height() != img.height() {
        return Err(Error::DimensionMismatch("distance map and image differ in size".into()));
    }
    Ok(smoothness_terms(d.data(), img, false).0)
}

/// Value, gradient with respect to the distances (when asked) and the sign
/// pattern of the normalised differences.
pub(crate) fn smoothness_terms(d: &[f64], img: &Image, want_grad: bool) -> (f64, Vec<f64>, Vec<i8>) {
    let (w, h) = (img.width(), img.height());
    let n = w * h;
    let inv: Vec<f64> = d.iter().map(|x| 1.0 / x).collect();
    let m = inv.iter().sum::<f64>() / n as f64;
    let dn: Vec<f64> = inv.iter().map(|x| x / m).collect();
    let mut value = 0.0;
    let mut g_norm = vec![0.0; if want_grad { n } else { 0 }];
    let mut signs = Vec::with_capacity(2 * n);
    let mut axis = |pairs: &mut dyn Iterator<Item = (usize, usize)>, count: usize| {
        if count == 0 {
            return;
        }
        let scale = 1.0 / count as f64;
        for (p, q) in pairs {
            let diff = dn[q] - dn[p];
            let weight = (-edge(img, p, q)).exp();
            value += scale * diff.abs() * weight;
            let s = sign(diff);
            signs.push(s as i8);
            if want_grad {
                g_norm[q] += scale * weight * s;
                g_norm[p] -= scale * weight * s;
            }
        }
    };
    axis(&mut (0..h).flat_map(|v| (0..w.saturating_sub(1)).map(move |u| (v * w + u, v * w + u + 1))), (w - 1) * h);
    axis(&mut (0..h.saturating_sub(1)).flat_map(|v| (0..w).map(move |u| (v * w + u, (v + 1) * w + u))), w * (h - 1));
    if !want_grad {
        return (value, Vec::new(), signs);
    }
    let dot: f64 = g_norm.iter().zip(&inv).map(|(g, i)| g * i).sum();
    let grad = (0..n)
        .map(|j| {
            let g_inv = g_norm[j] / m - dot / (m * m * n as f64);
            -g_inv * inv[j] * inv[j]
        })
        .collect();
    (value, grad, signs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bumpy(w: usize, h: usize) -> DistanceMap {
        DistanceMap::new(w, h, (0..w * h).map(|i| 2.0 + ((i * 37) % 11) as f64 * 0.3).collect()).unwrap()
    }

    fn textured(w: usize, h: usize) -> Image {
        Image::from_fn(w, h, |u, v| ((u * 5 + v * 3) % 7) as f64 / 6.0)
    }

    #[test]
    fn constant_distance_is_smooth() {
        let d = DistanceMap::constant(6, 5, 4.2).unwrap();
        assert_eq!(smoothness_loss(&d, &textured(6, 5)).unwrap(), 0.0);
        let (_, g, _) = smoothness_terms(d.data(), &textured(6, 5), true);
        assert!(g.iter().all(|x| x.abs() < 1e-15));
    }

    #[test]
    fn invariant_to_scale() {
        let d = bumpy(7, 6);
        let img = textured(7, 6);
        let base = smoothness_loss(&d, &img).unwrap();
        assert!(base > 0.0);
        for c in [0.5, 2.0, 10.0] {
            let scaled = smoothness_loss(&d.map(|x| c * x).unwrap(), &img).unwrap();
            assert!((scaled - base).abs() < 1e-12);
        }
    }

    #[test]
    fn image_edges_discount_steps() {
        let d = DistanceMap::new(4, 1, vec![1.0, 1.0, 2.0, 2.0]).unwrap();
        let flat = Image::filled(4, 1, 1, 0.5);
        let edged = Image::new(4, 1, 1, vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        assert!(smoothness_loss(&d, &edged).unwrap() < smoothness_loss(&d, &flat).unwrap());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let d = bumpy(5, 4);
        let img = textured(5, 4);
        let (_, g, _) = smoothness_terms(d.data(), &img, true);
        for j in 0..20 {
            let h = 1e-6;
            let mut p = d.data().to_vec();
            let mut m = d.data().to_vec();
            p[j] += h;
            m[j] -= h;
            let fd = (smoothness_terms(&p, &img, false).0 - smoothness_terms(&m, &img, false).0) / (2.0 * h);
            assert!((fd - g[j]).abs() < 1e-7, "j={j} fd={fd} g={}", g[j]);
        }
    }
}
