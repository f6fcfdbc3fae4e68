//! Contrast-vector encoding of transmittance spectra.
//!
//! Each polarization half (29 samples) is split into seven overlapping
//! five-sample bands, `{4i-3, …, 4i+1}` in 1-based indexing, so neighbouring
//! bands share one boundary sample. The contrast of a band is the largest
//! transmittance inside it divided by the largest outside it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datagen::{wavelength_nm, Spectrum, HALF_LEN, SPECTRUM_LEN};
use crate::error::{Error, Result};

pub const BANDS: usize = 7;
pub const CONTRAST_LEN: usize = 2 * BANDS;
/// Added to both maxima when either is exactly zero.
pub const CONTRAST_EPS: f64 = 1e-6;

/// Contrast assigned to the extremum band of a semi-random valley target.
pub const VALLEY_CONTRAST: f64 = 0.01;
/// Off-band choices for semi-random valley targets.
pub const VALLEY_BACKGROUND: [f64; 3] = [0.4, 0.5, 0.6];
pub const PEAK_CONTRAST: f64 = 2.5;
pub const PEAK_BACKGROUND: f64 = 0.01;

/// Zero-based sample indices covered by band `band` (0-based).
pub fn band_range(band: usize) -> std::ops::RangeInclusive<usize> {
    4 * band..=4 * band + 4
}

/// Fourteen positive contrasts: seven TE bands, then seven TM bands.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ContrastVector {
    values: [f64; CONTRAST_LEN],
}

impl ContrastVector {
    pub fn new(values: &[f64]) -> Result<Self> {
        let values: [f64; CONTRAST_LEN] = values
            .try_into()
            .map_err(|_| Error::shape("contrast_vector", format!("expected {CONTRAST_LEN} values, got {}", values.len())))?;
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::OutOfRange(format!("contrast {v} is not a positive finite number")));
        }
        Ok(ContrastVector { values })
    }

    pub fn values(&self) -> &[f64; CONTRAST_LEN] {
        &self.values
    }

    pub fn te(&self) -> &[f64] {
        &self.values[..BANDS]
    }

    pub fn tm(&self) -> &[f64] {
        &self.values[BANDS..]
    }
}

impl TryFrom<Vec<f64>> for ContrastVector {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        ContrastVector::new(&v)
    }
}

impl From<ContrastVector> for Vec<f64> {
    fn from(c: ContrastVector) -> Self {
        c.values.to_vec()
    }
}

/// Seven band contrasts of one 29-sample polarization half.
pub fn contrast7(half: &[f64]) -> Result<[f64; BANDS]> {
    if half.len() != HALF_LEN {
        return Err(Error::shape("contrast7", format!("expected {HALF_LEN} samples, got {}", half.len())));
    }
    if let Some((i, v)) = half.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
        return Err(Error::OutOfRange(format!("transmittance {i} = {v} outside [0, 1]")));
    }
    let mut out = [0.0; BANDS];
    for (band, c) in out.iter_mut().enumerate() {
        let inside = band_range(band);
        let mut max_in = f64::NEG_INFINITY;
        let mut max_out = f64::NEG_INFINITY;
        for (k, &t) in half.iter().enumerate() {
            if inside.contains(&k) {
                max_in = max_in.max(t);
            } else {
                max_out = max_out.max(t);
            }
        }
        *c = if max_in > 0.0 && max_out > 0.0 {
            max_in / max_out
        } else {
            (max_in + CONTRAST_EPS) / (max_out + CONTRAST_EPS)
        };
    }
    Ok(out)
}

pub fn contrast_vector(spectrum: &Spectrum) -> ContrastVector {
    let t = spectrum.to_f64();
    let te = contrast7(&t[..HALF_LEN]).expect("spectrum invariants hold");
    let tm = contrast7(&t[HALF_LEN..]).expect("spectrum invariants hold");
    let mut values = [0.0; CONTRAST_LEN];
    values[..BANDS].copy_from_slice(&te);
    values[BANDS..].copy_from_slice(&tm);
    ContrastVector { values }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    Valley,
    Peak,
}

/// Synthetic single-extremum contrast vector for band `band` (1-based),
/// applied identically to both polarizations.
pub fn semi_random_contrast(band: usize, polarity: Polarity, seed: u64) -> Result<ContrastVector> {
    if !(1..=BANDS).contains(&band) {
        return Err(Error::InvalidArgument(format!("band {band} outside 1..={BANDS}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let target = band - 1;
    let mut values = [0.0; CONTRAST_LEN];
    for (k, v) in values.iter_mut().enumerate() {
        let on_band = k % BANDS == target;
        *v = match (polarity, on_band) {
            (Polarity::Valley, true) => VALLEY_CONTRAST,
            (Polarity::Valley, false) => VALLEY_BACKGROUND[rng.gen_range(0..VALLEY_BACKGROUND.len())],
            (Polarity::Peak, true) => PEAK_CONTRAST,
            (Polarity::Peak, false) => PEAK_BACKGROUND,
        };
    }
    ContrastVector::new(&values)
}

/// 1-based band whose centre is nearest to the half's minimum (valley) or
/// maximum (peak); ties go to the lower band.
pub fn extremum_band(half: &[f64], polarity: Polarity) -> usize {
    let mut best = 0;
    for (k, &v) in half.iter().enumerate() {
        let better = match polarity {
            Polarity::Valley => v < half[best],
            Polarity::Peak => v > half[best],
        };
        if better {
            best = k;
        }
    }
    (0..BANDS).min_by_key(|&b| (4 * b + 2).abs_diff(best)).unwrap_or(0) + 1
}

/// Inverted Gaussian `1 − A·exp(−(λ−μ)²/(2σ²))` on both polarization halves.
pub fn gaussian_target(mean_nm: f64, sigma_nm: f64, amplitude: f64) -> Result<Spectrum> {
    if !(amplitude > 0.0 && amplitude <= 1.0) {
        return Err(Error::InvalidArgument(format!("amplitude {amplitude} outside (0, 1]")));
    }
    if !(sigma_nm > 0.0) {
        return Err(Error::InvalidArgument(format!("sigma {sigma_nm} must be positive")));
    }
    let mut values = [0.0f64; SPECTRUM_LEN];
    for k in 0..HALF_LEN {
        let d = wavelength_nm(k) - mean_nm;
        let t = (1.0 - amplitude * (-d * d / (2.0 * sigma_nm * sigma_nm)).exp()).clamp(0.0, 1.0);
        values[k] = t;
        values[k + HALF_LEN] = t;
    }
    Spectrum::from_f64(&values)
}
