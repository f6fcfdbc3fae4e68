//! Losses and image metrics.

use serde::{Deserialize, Serialize};

use crate::datagen::{ShapeImage, IMAGE_SIDE};
use crate::error::{Error, Result};

/// Binarization threshold used when turning generated images into masks.
pub const BINARIZE_THRESHOLD: f32 = 0.5;

pub fn mse(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::shape("mse", format!("lengths {} and {}", a.len(), b.len())));
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64)
}

/// SSIM with uniform square windows.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SsimConfig {
    pub window: usize,
    pub k1: f64,
    pub k2: f64,
    pub dynamic_range: f64,
}

impl Default for SsimConfig {
    fn default() -> Self {
        SsimConfig { window: 11, k1: 0.01, k2: 0.03, dynamic_range: 1.0 }
    }
}

impl SsimConfig {
    pub fn validate(&self, h: usize, w: usize) -> Result<()> {
        if self.window % 2 == 0 || self.window > IMAGE_SIDE || self.window > h || self.window > w {
            return Err(Error::InvalidArgument(format!(
                "ssim window {} must be odd and fit the {h}x{w} image (max {IMAGE_SIDE})",
                self.window
            )));
        }
        if !(self.k1 > 0.0 && self.k2 > 0.0 && self.dynamic_range > 0.0) {
            return Err(Error::InvalidArgument("ssim constants must be positive".into()));
        }
        Ok(())
    }

    fn c1(&self) -> f64 {
        (self.k1 * self.dynamic_range).powi(2)
    }

    fn c2(&self) -> f64 {
        (self.k2 * self.dynamic_range).powi(2)
    }
}

/// Summed-area table with a zero border: `t[(r+1)(w+1) + c+1] = Σ_{≤r, ≤c}`.
fn integral(v: &[f64], h: usize, w: usize) -> Vec<f64> {
    let mut t = vec![0.0; (h + 1) * (w + 1)];
    for r in 0..h {
        let mut row = 0.0;
        for c in 0..w {
            row += v[r * w + c];
            t[(r + 1) * (w + 1) + c + 1] = t[r * (w + 1) + c + 1] + row;
        }
    }
    t
}

/// Sum over rows `r0..r1`, cols `c0..c1` (exclusive ends).
#[inline]
fn box_sum(t: &[f64], w: usize, r0: usize, r1: usize, c0: usize, c1: usize) -> f64 {
    let s = w + 1;
    t[r1 * s + c1] - t[r0 * s + c1] - t[r1 * s + c0] + t[r0 * s + c0]
}

/// Mean SSIM over every valid window placement, plus (optionally) its
/// gradient with respect to `x`. Inputs are unchecked; see [`ssim_image`].
pub fn ssim_with_grad(
    x: &[f64],
    y: &[f64],
    h: usize,
    w: usize,
    cfg: &SsimConfig,
    want_grad: bool,
) -> (f64, Option<Vec<f64>>) {
    let k = cfg.window;
    let (oh, ow) = (h - k + 1, w - k + 1);
    let m = (k * k) as f64;
    let (c1, c2) = (cfg.c1(), cfg.c2());
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(a, b)| a * b).collect();
    let (tx, ty, txx, tyy, txy) = (integral(x, h, w), integral(y, h, w), integral(&xx, h, w), integral(&yy, h, w), integral(&xy, h, w));

    let nwin = (oh * ow) as f64;
    let mut total = 0.0;
    // per-window coefficients of dS/dx_p = (a + b·x_p + c·y_p) / m
    let (mut ca, mut cb, mut cc) = if want_grad {
        (vec![0.0; oh * ow], vec![0.0; oh * ow], vec![0.0; oh * ow])
    } else {
        (Vec::new(), Vec::new(), Vec::new())
    };
    for i in 0..oh {
        for j in 0..ow {
            let bs = |t: &[f64]| box_sum(t, w, i, i + k, j, j + k) / m;
            let (mx, my) = (bs(&tx), bs(&ty));
            let vx = bs(&txx) - mx * mx;
            let vy = bs(&tyy) - my * my;
            let cxy = bs(&txy) - mx * my;
            let a1 = 2.0 * mx * my + c1;
            let a2 = 2.0 * cxy + c2;
            let b1 = mx * mx + my * my + c1;
            let b2 = vx + vy + c2;
            let s = a1 * a2 / (b1 * b2);
            total += s;
            if want_grad {
                let d_mx = 2.0 * my * a2 / (b1 * b2) - s * 2.0 * mx / b1;
                let d_vx = -s / b2;
                let d_cxy = 2.0 * a1 / (b1 * b2);
                let idx = i * ow + j;
                ca[idx] = d_mx - 2.0 * d_vx * mx - d_cxy * my;
                cb[idx] = 2.0 * d_vx;
                cc[idx] = d_cxy;
            }
        }
    }
    let value = total / nwin;
    if !want_grad {
        return (value, None);
    }
    let (ta, tb, tc) = (integral(&ca, oh, ow), integral(&cb, oh, ow), integral(&cc, oh, ow));
    let mut grad = vec![0.0; h * w];
    for r in 0..h {
        let r0 = (r + 1).saturating_sub(k);
        let r1 = (r + 1).min(oh);
        for c in 0..w {
            let c0 = (c + 1).saturating_sub(k);
            let c1 = (c + 1).min(ow);
            if r0 >= r1 || c0 >= c1 {
                continue;
            }
            let p = r * w + c;
            let sa = box_sum(&ta, ow, r0, r1, c0, c1);
            let sb = box_sum(&tb, ow, r0, r1, c0, c1);
            let sc = box_sum(&tc, ow, r0, r1, c0, c1);
            grad[p] = (sa + sb * x[p] + sc * y[p]) / (m * nwin);
        }
    }
    (value, Some(grad))
}

/// Mean SSIM of two `h × w` images with pixels in `[0, 1]`.
pub fn ssim_image(a: &[f64], b: &[f64], h: usize, w: usize, cfg: &SsimConfig) -> Result<f64> {
    if a.len() != h * w || b.len() != h * w {
        return Err(Error::shape("ssim", format!("{} and {} pixels for {h}x{w}", a.len(), b.len())));
    }
    cfg.validate(h, w)?;
    for (i, v) in a.iter().chain(b).enumerate() {
        if !(0.0..=1.0).contains(v) {
            return Err(Error::OutOfRange(format!("ssim pixel {} = {v} outside [0, 1]", i % (h * w))));
        }
    }
    Ok(ssim_with_grad(a, b, h, w, cfg, false).0)
}

pub fn ssim(a: &ShapeImage, b: &ShapeImage, cfg: &SsimConfig) -> Result<f64> {
    let to64 = |s: &ShapeImage| s.pixels().iter().map(|&v| v as f64).collect::<Vec<_>>();
    ssim_image(&to64(a), &to64(b), IMAGE_SIDE, IMAGE_SIDE, cfg)
}

/// `spectrum + alpha·(1 − SSIM) + beta·period`, with `shape_dissim = 1 − SSIM`.
pub fn generator_loss(spectrum_loss: f64, shape_dissim: f64, period_loss: f64, alpha: f64, beta: f64) -> f64 {
    spectrum_loss + alpha * shape_dissim + beta * period_loss
}

/// Pixels at or above `threshold` become 1, the rest 0.
pub fn binarize(img: &ShapeImage, threshold: f32) -> ShapeImage {
    ShapeImage::new(img.pixels().iter().map(|&v| if v >= threshold { 1.0 } else { 0.0 }).collect())
        .expect("binary pixels are in range")
}

/// Mean per-pixel distance to the nearer of 0 and 1.
pub fn mean_manhattan_to_binary(img: &ShapeImage) -> f64 {
    img.pixels().iter().map(|&v| (v as f64).min(1.0 - v as f64)).sum::<f64>() / img.pixels().len() as f64
}
