//! Analytic surrogate for the full-wave solver.
//!
//! A 500 nm silicon film patterned by the unit-cell image is homogenized
//! per polarization (column fills for TE, row fills for TM), its power
//! transmittance is computed with the single-layer characteristic matrix on
//! a glass substrate, and a Lorentzian dip at `period · Re(n_eff(540 nm))`
//! models the lattice resonance. Fills enter only through their histogram,
//! so a quarter turn of the image swaps TE and TM bit-for-bit.

use std::f64::consts::TAU;

use num_complex::Complex64;

use crate::datagen::{wavelength_nm, Period, ShapeImage, Spectrum, HALF_LEN, IMAGE_PIXELS, IMAGE_SIDE, SPECTRUM_LEN};
use crate::error::{Error, Result};

pub const FILM_THICKNESS_NM: f64 = 500.0;
pub const SUBSTRATE_INDEX: f64 = 1.45;
pub const AMBIENT_INDEX: f64 = 1.0;
pub const DIP_WIDTH_NM: f64 = 25.0;
pub const DIP_STRENGTH: f64 = 0.85;
pub const RESONANCE_REFERENCE_NM: f64 = 540.0;

/// Dispersive, blue-absorbing silicon permittivity `(n + ik)²`.
pub fn silicon_permittivity(lambda_nm: f64) -> Complex64 {
    let n = 3.2 + 0.35 * (400.0 / lambda_nm).powi(2);
    let k = 0.30 * (-(lambda_nm - 400.0) / 80.0).exp();
    Complex64::new(n, k).powi(2)
}

/// `(1/64) Σ_k [f_k/ε + (1 − f_k)]⁻¹` over line fills given as a histogram
/// of set-pixel counts (`hist[c]` lines contain `c` set pixels).
pub fn homogenized_permittivity(hist: &[u32; IMAGE_SIDE + 1], eps_si: Complex64) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for (count, &lines) in hist.iter().enumerate() {
        if lines == 0 {
            continue;
        }
        let f = count as f64 / IMAGE_SIDE as f64;
        let term = (f / eps_si + (1.0 - f)).inv();
        acc += term * lines as f64;
    }
    acc / IMAGE_SIDE as f64
}

/// Power transmittance at normal incidence through ambient / film / substrate.
pub fn slab_transmittance(n_film: Complex64, thickness_nm: f64, lambda_nm: f64, n_sub: f64) -> f64 {
    let (b, c) = slab_admittance(n_film, thickness_nm, lambda_nm, n_sub);
    let denom = (b * AMBIENT_INDEX + c).norm_sqr();
    4.0 * AMBIENT_INDEX * n_sub / denom
}

/// Power reflectance of the same stack.
pub fn slab_reflectance(n_film: Complex64, thickness_nm: f64, lambda_nm: f64, n_sub: f64) -> f64 {
    let (b, c) = slab_admittance(n_film, thickness_nm, lambda_nm, n_sub);
    ((b * AMBIENT_INDEX - c) / (b * AMBIENT_INDEX + c)).norm_sqr()
}

/// `[B, C]ᵀ = M · [1, n_sub]ᵀ` with the characteristic matrix written for the
/// `n − ik` convention; `n_film` is given with positive extinction.
fn slab_admittance(n_film: Complex64, thickness_nm: f64, lambda_nm: f64, n_sub: f64) -> (Complex64, Complex64) {
    let n = n_film.conj();
    let delta = n * (TAU * thickness_nm / lambda_nm);
    let (cos, sin) = (delta.cos(), delta.sin());
    let i = Complex64::i();
    let b = cos + i * sin / n * n_sub;
    let c = i * n * sin + cos * n_sub;
    (b, c)
}

/// Multiplicative Lorentzian notch centred at `center_nm`.
pub fn resonance_factor(lambda_nm: f64, center_nm: f64, fill: f64) -> f64 {
    let a = DIP_STRENGTH * fill.sqrt();
    let w2 = DIP_WIDTH_NM * DIP_WIDTH_NM;
    1.0 - a * w2 / ((lambda_nm - center_nm).powi(2) + w2)
}

fn histogram(counts: &[u32; IMAGE_SIDE]) -> [u32; IMAGE_SIDE + 1] {
    let mut h = [0u32; IMAGE_SIDE + 1];
    for &c in counts {
        h[c as usize] += 1;
    }
    h
}

/// Effective index per polarization at one wavelength: `(TE, TM)`.
pub fn effective_indices(shape: &ShapeImage, lambda_nm: f64) -> (Complex64, Complex64) {
    let eps = silicon_permittivity(lambda_nm);
    let te = homogenized_permittivity(&histogram(&shape.column_counts()), eps).sqrt();
    let tm = homogenized_permittivity(&histogram(&shape.row_counts()), eps).sqrt();
    (te, tm)
}

/// Resonance wavelengths `(TE, TM)` for a device.
pub fn resonance_wavelengths(shape: &ShapeImage, period: Period) -> (f64, f64) {
    let (te, tm) = effective_indices(shape, RESONANCE_REFERENCE_NM);
    let p = period.nm() as f64;
    (p * te.re, p * tm.re)
}

pub fn surrogate_spectrum(shape: &ShapeImage, period: Period) -> Result<Spectrum> {
    if !shape.is_binary() {
        return Err(Error::InvalidArgument("surrogate solver needs a binary shape".into()));
    }
    let col_hist = histogram(&shape.column_counts());
    let row_hist = histogram(&shape.row_counts());
    let set: u32 = shape.column_counts().iter().sum();
    let fill = set as f64 / IMAGE_PIXELS as f64;
    let (res_te, res_tm) = resonance_wavelengths(shape, period);

    let mut values = [0.0f64; SPECTRUM_LEN];
    for k in 0..HALF_LEN {
        let lambda = wavelength_nm(k);
        let eps = silicon_permittivity(lambda);
        for (hist, res, offset) in [(&col_hist, res_te, 0), (&row_hist, res_tm, HALF_LEN)] {
            let n_eff = homogenized_permittivity(hist, eps).sqrt();
            let t = slab_transmittance(n_eff, FILM_THICKNESS_NM, lambda, SUBSTRATE_INDEX)
                * resonance_factor(lambda, res, fill);
            values[k + offset] = t.clamp(0.0, 1.0);
        }
    }
    Spectrum::from_f64(&values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_cell_is_bare_interface() {
        let s = surrogate_spectrum(&ShapeImage::zeros(), Period::new(250).unwrap()).unwrap();
        let want = 4.0 * 1.45 / (2.45f64 * 2.45);
        assert!((want - 0.9663).abs() < 1e-4);
        for &t in s.values() {
            assert!((t as f64 - want).abs() < 1e-6, "{t}");
        }
    }

    #[test]
    fn lossy_film_conserves_energy() {
        for lambda in [400.0, 480.0, 560.0, 680.0] {
            let n = silicon_permittivity(lambda).sqrt();
            let t = slab_transmittance(n, FILM_THICKNESS_NM, lambda, SUBSTRATE_INDEX);
            let r = slab_reflectance(n, FILM_THICKNESS_NM, lambda, SUBSTRATE_INDEX);
            assert!(t > 0.0 && r > 0.0 && t + r < 1.0, "λ={lambda}: T={t} R={r}");
        }
    }

    #[test]
    fn non_binary_rejected() {
        let grey = ShapeImage::from_fn(|_, _| 0.3);
        assert!(surrogate_spectrum(&grey, Period::new(300).unwrap()).is_err());
    }

    #[test]
    fn resonance_moves_with_period() {
        let shape = ShapeImage::from_fn(|r, c| ((r / 8 + c / 8) % 2) as f32);
        let mut last = 0.0;
        for p in (200..=400).step_by(20) {
            let (te, _) = resonance_wavelengths(&shape, Period::new(p).unwrap());
            assert!(te > last);
            last = te;
        }
    }
}
