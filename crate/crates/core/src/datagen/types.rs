use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Side length of the square unit-cell image.
pub const IMAGE_SIDE: usize = 64;
pub const IMAGE_PIXELS: usize = IMAGE_SIDE * IMAGE_SIDE;
/// Samples per polarization.
pub const HALF_LEN: usize = 29;
/// TE samples followed by TM samples.
pub const SPECTRUM_LEN: usize = 2 * HALF_LEN;
pub const PERIOD_MIN: u16 = 200;
pub const PERIOD_MAX: u16 = 400;

/// Wavelength (nm) of grid sample `k` within one polarization half.
pub fn wavelength_nm(k: usize) -> f64 {
    400.0 + 10.0 * k as f64
}

/// 64×64 row-major intensity image with values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ShapeImage {
    pixels: Vec<f32>,
}

impl ShapeImage {
    pub fn new(pixels: Vec<f32>) -> Result<Self> {
        if pixels.len() != IMAGE_PIXELS {
            return Err(Error::shape("shape_image", format!("expected {IMAGE_PIXELS} pixels, got {}", pixels.len())));
        }
        if let Some((i, v)) = pixels.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(Error::OutOfRange(format!("pixel {i} = {v} outside [0, 1]")));
        }
        Ok(ShapeImage { pixels })
    }

    pub fn zeros() -> Self {
        ShapeImage { pixels: vec![0.0; IMAGE_PIXELS] }
    }

    pub fn ones() -> Self {
        ShapeImage { pixels: vec![1.0; IMAGE_PIXELS] }
    }

    /// Builds an image from `f(row, col)`, clamping into `[0, 1]`.
    pub fn from_fn(mut f: impl FnMut(usize, usize) -> f32) -> Self {
        let mut pixels = Vec::with_capacity(IMAGE_PIXELS);
        for r in 0..IMAGE_SIDE {
            for c in 0..IMAGE_SIDE {
                pixels.push(f(r, c).clamp(0.0, 1.0));
            }
        }
        ShapeImage { pixels }
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.pixels[row * IMAGE_SIDE + col]
    }

    pub fn is_binary(&self) -> bool {
        self.pixels.iter().all(|&v| v == 0.0 || v == 1.0)
    }

    /// Mean pixel value; the material fill fraction for binary images.
    pub fn fill_fraction(&self) -> f64 {
        self.pixels.iter().map(|&v| v as f64).sum::<f64>() / IMAGE_PIXELS as f64
    }

    /// Quarter turn counterclockwise: `out[r][c] = in[c][N-1-r]`.
    pub fn rot90(&self) -> Self {
        let n = IMAGE_SIDE;
        Self::from_fn(|r, c| self.get(c, n - 1 - r))
    }

    pub fn rot180(&self) -> Self {
        let mut pixels = self.pixels.clone();
        pixels.reverse();
        ShapeImage { pixels }
    }

    pub fn rot270(&self) -> Self {
        self.rot180().rot90()
    }

    /// Number of set pixels in each column (binary images).
    pub fn column_counts(&self) -> [u32; IMAGE_SIDE] {
        let mut out = [0u32; IMAGE_SIDE];
        for r in 0..IMAGE_SIDE {
            for (c, o) in out.iter_mut().enumerate() {
                *o += (self.get(r, c) >= 0.5) as u32;
            }
        }
        out
    }

    /// Number of set pixels in each row (binary images).
    pub fn row_counts(&self) -> [u32; IMAGE_SIDE] {
        let mut out = [0u32; IMAGE_SIDE];
        for (r, o) in out.iter_mut().enumerate() {
            *o = self.pixels[r * IMAGE_SIDE..][..IMAGE_SIDE].iter().filter(|&&v| v >= 0.5).count() as u32;
        }
        out
    }

    /// Binary portable graymap (P5, maxval 255).
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{IMAGE_SIDE} {IMAGE_SIDE}\n255\n").into_bytes();
        out.extend(self.pixels.iter().map(|&v| (v * 255.0).round() as u8));
        out
    }

    /// Reads P5 or P2 graymaps of size 64×64, scaling by maxval.
    pub fn from_pgm(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Format { offset: 0, message: format!("pgm: {m}") };
        let mut pos = 0usize;
        let mut token = |bytes: &[u8]| -> Option<String> {
            loop {
                while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                    pos += 1;
                }
                if pos < bytes.len() && bytes[pos] == b'#' {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                    continue;
                }
                break;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            (pos > start).then(|| String::from_utf8_lossy(&bytes[start..pos]).into_owned())
        };
        let magic = token(bytes).ok_or_else(|| bad("missing magic"))?;
        let mut num = |name: &str| -> Result<usize> {
            token(bytes).and_then(|t| t.parse().ok()).ok_or_else(|| bad(&format!("bad {name}")))
        };
        let (w, h, maxval) = (num("width")?, num("height")?, num("maxval")?);
        if (w, h) != (IMAGE_SIDE, IMAGE_SIDE) {
            return Err(bad(&format!("expected {IMAGE_SIDE}x{IMAGE_SIDE}, got {w}x{h}")));
        }
        if maxval == 0 || maxval > 255 {
            return Err(bad("maxval must be in 1..=255"));
        }
        let pixels: Vec<f32> = match magic.as_str() {
            "P5" => {
                let data = bytes.get(pos + 1..pos + 1 + IMAGE_PIXELS).ok_or_else(|| bad("truncated raster"))?;
                data.iter().map(|&b| b as f32 / maxval as f32).collect()
            }
            "P2" => (0..IMAGE_PIXELS)
                .map(|_| num("pixel").map(|v| v as f32 / maxval as f32))
                .collect::<Result<_>>()?,
            other => return Err(bad(&format!("unsupported magic {other}"))),
        };
        ShapeImage::new(pixels)
    }
}

/// 58 transmittance samples: TE 400→680 nm, then TM 400→680 nm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f32>", into = "Vec<f32>")]
pub struct Spectrum {
    values: [f32; SPECTRUM_LEN],
}

impl Spectrum {
    pub fn new(values: &[f32]) -> Result<Self> {
        let arr: [f32; SPECTRUM_LEN] = values
            .try_into()
            .map_err(|_| Error::shape("spectrum", format!("expected {SPECTRUM_LEN} values, got {}", values.len())))?;
        if let Some((i, v)) = arr.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(Error::OutOfRange(format!("transmittance {i} = {v} outside [0, 1]")));
        }
        Ok(Spectrum { values: arr })
    }

    pub fn from_f64(values: &[f64]) -> Result<Self> {
        Self::new(&values.iter().map(|&v| v as f32).collect::<Vec<_>>())
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.values.iter().map(|&v| v as f64).collect()
    }

    pub fn te(&self) -> &[f32] {
        &self.values[..HALF_LEN]
    }

    pub fn tm(&self) -> &[f32] {
        &self.values[HALF_LEN..]
    }

    /// Same data with the TE and TM halves exchanged.
    pub fn swapped(&self) -> Self {
        let mut values = [0.0; SPECTRUM_LEN];
        values[..HALF_LEN].copy_from_slice(self.tm());
        values[HALF_LEN..].copy_from_slice(self.te());
        Spectrum { values }
    }
}

impl TryFrom<Vec<f32>> for Spectrum {
    type Error = Error;

    fn try_from(v: Vec<f32>) -> Result<Self> {
        Spectrum::new(&v)
    }
}

impl From<Spectrum> for Vec<f32> {
    fn from(s: Spectrum) -> Self {
        s.values.to_vec()
    }
}

/// Lattice period in whole nanometres, 200..=400.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u16", into = "u16")]
pub struct Period(u16);

impl Period {
    pub fn new(nm: u16) -> Result<Self> {
        if (PERIOD_MIN..=PERIOD_MAX).contains(&nm) {
            Ok(Period(nm))
        } else {
            Err(Error::OutOfRange(format!("period {nm} nm outside [{PERIOD_MIN}, {PERIOD_MAX}]")))
        }
    }

    /// Rounds a real-valued period to the nearest nanometre, clamped to range.
    pub fn from_real(nm: f64) -> Self {
        let r = if nm.is_finite() { nm.round() } else { PERIOD_MIN as f64 };
        Period(r.clamp(PERIOD_MIN as f64, PERIOD_MAX as f64) as u16)
    }

    pub fn nm(self) -> u16 {
        self.0
    }

    /// `(P − 200) / 200`, the network-side scaling into `[0, 1]`.
    pub fn normalized(self) -> f64 {
        (self.0 as f64 - PERIOD_MIN as f64) / (PERIOD_MAX - PERIOD_MIN) as f64
    }

    pub fn denormalize(x: f64) -> f64 {
        PERIOD_MIN as f64 + (PERIOD_MAX - PERIOD_MIN) as f64 * x
    }
}

impl TryFrom<u16> for Period {
    type Error = Error;

    fn try_from(v: u16) -> Result<Self> {
        Period::new(v)
    }
}

impl From<Period> for u16 {
    fn from(p: Period) -> u16 {
        p.0
    }
}

/// One dataset entry.
#[derive(Clone, Debug, PartialEq)]
pub struct DeviceRecord {
    pub shape: ShapeImage,
    pub period: Period,
    pub spectrum: Spectrum,
}
