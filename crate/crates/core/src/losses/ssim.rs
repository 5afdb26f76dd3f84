use super::PixelMap;
use crate::error::{Error, Result};
use crate::image::{Image, Mask};

pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

/// Statistics of one 3x3 window restricted to in-bounds, unmasked pixels.
struct Window {
    n: f64,
    mx: f64,
    my: f64,
    vx: f64,
    vy: f64,
    cxy: f64,
}

impl Window {
    fn ssim(&self) -> f64 {
        let a = 2.0 * self.mx * self.my + SSIM_C1;
        let b = 2.0 * self.cxy + SSIM_C2;
        let c = self.mx * self.mx + self.my * self.my + SSIM_C1;
        let d = self.vx + self.vy + SSIM_C2;
        a * b / (c * d)
    }

    /// Partial derivatives of SSIM with respect to (mean_y, var_y, cov_xy).
    fn partials(&self) -> (f64, f64, f64) {
        let a = 2.0 * self.mx * self.my + SSIM_C1;
        let b = 2.0 * self.cxy + SSIM_C2;
        let c = self.mx * self.mx + self.my * self.my + SSIM_C1;
        let d = self.vx + self.vy + SSIM_C2;
        let s = a * b / (c * d);
        (s * (2.0 * self.mx / a - 2.0 * self.my / c), -s / d, 2.0 * s / b)
    }
}

#[inline]
fn neighbours(u: usize, v: usize, w: usize, h: usize) -> impl Iterator<Item = usize> {
    let us = u.saturating_sub(1)..=(u + 1).min(w - 1);
    let vs = v.saturating_sub(1)..=(v + 1).min(h - 1);
    vs.flat_map(move |y| us.clone().map(move |x| y * w + x))
}

fn window(x: &Image, y: &Image, mask: &[bool], u: usize, v: usize, c: usize) -> Window {
    let (w, h, nc) = (x.width(), x.height(), x.channels());
    let (xd, yd) = (x.data(), y.data());
    let (mut n, mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for q in neighbours(u, v, w, h).filter(|&q| mask[q]) {
        let (a, b) = (xd[q * nc + c], yd[q * nc + c]);
        n += 1.0;
        sx += a;
        sy += b;
        sxx += a * a;
        syy += b * b;
        sxy += a * b;
    }
    let (mx, my) = (sx / n, sy / n);
    Window { n, mx, my, vx: sxx / n - mx * mx, vy: syy / n - my * my, cxy: sxy / n - mx * my }
}

fn check(x: &Image, y: &Image, mask: &Mask) -> Result<()> {
    if !x.same_shape(y) || mask.width() != x.width() || mask.height() != x.height() {
        return Err(Error::DimensionMismatch("SSIM inputs must share their shape".into()));
    }
    Ok(())
}

/// Channel-averaged SSIM over 3x3 windows. Masked pixels get no value and
/// are left out of their neighbours' window statistics.
pub fn ssim(x: &Image, y: &Image, mask: &Mask) -> Result<PixelMap> {
    check(x, y, mask)?;
    let (w, h, nc) = (x.width(), x.height(), x.channels());
    let m = mask.data();
    let mut values = vec![0.0; w * h];
    for v in 0..h {
        for u in 0..w {
            let i = v * w + u;
            if m[i] {
                values[i] = (0..nc).map(|c| window(x, y, m, u, v, c).ssim()).sum::<f64>() / nc as f64;
            }
        }
    }
    Ok(PixelMap { width: w, height: h, values, valid: m.to_vec() })
}

/// Given `upstream[p] = dL/dSSIM(p)`, returns `dL/dy` per pixel and channel.
pub(crate) fn ssim_backward(x: &Image, y: &Image, mask: &[bool], upstream: &[f64]) -> Vec<f64> {
    let (w, h, nc) = (x.width(), x.height(), x.channels());
    let (xd, yd) = (x.data(), y.data());
    let mut grad = vec![0.0; w * h * nc];
    for v in 0..h {
        for u in 0..w {
            let p = v * w + u;
            if !mask[p] || upstream[p] == 0.0 {
                continue;
            }
            let g = upstream[p] / nc as f64;
            for c in 0..nc {
                let win = window(x, y, mask, u, v, c);
                let (d_my, d_vy, d_cxy) = win.partials();
                for q in neighbours(u, v, w, h).filter(|&q| mask[q]) {
                    let (a, b) = (xd[q * nc + c], yd[q * nc + c]);
                    let ds = d_my / win.n + d_vy * 2.0 * (b - win.my) / win.n + d_cxy * (a - win.mx) / win.n;
                    grad[q * nc + c] += g * ds;
                }
            }
        }
    }
    grad
}
