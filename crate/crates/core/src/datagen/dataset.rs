use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::datagen::oracle::surrogate_spectrum;
use crate::datagen::polygon::{polygon_from_rng, PolygonParams};
use crate::datagen::raster::rasterize;
use crate::datagen::{DeviceRecord, Period, PERIOD_MAX, PERIOD_MIN};
use crate::error::{Error, Result};

/// Sampling ranges for random unit cells.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GenerationRanges {
    pub vertex_count: (usize, usize),
    pub irregularity: (f64, f64),
    pub spikiness: (f64, f64),
    pub radius: (f64, f64),
}

impl Default for GenerationRanges {
    fn default() -> Self {
        GenerationRanges { vertex_count: (3, 12), irregularity: (0.2, 0.8), spikiness: (0.1, 0.5), radius: (0.12, 0.6) }
    }
}

/// Generator for record `index` of a dataset seeded with `seed`.
pub fn record_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

pub fn generate_record(seed: u64, index: u64, ranges: &GenerationRanges) -> DeviceRecord {
    let mut rng = record_rng(seed, index);
    let params = PolygonParams {
        vertex_count: rng.gen_range(ranges.vertex_count.0..=ranges.vertex_count.1),
        irregularity: rng.gen_range(ranges.irregularity.0..=ranges.irregularity.1),
        spikiness: rng.gen_range(ranges.spikiness.0..=ranges.spikiness.1),
        radius: rng.gen_range(ranges.radius.0..=ranges.radius.1),
    };
    let period = Period::new(rng.gen_range(PERIOD_MIN..=PERIOD_MAX)).expect("sampled in range");
    let shape = rasterize(&polygon_from_rng(&mut rng, params));
    let spectrum = surrogate_spectrum(&shape, period).expect("rasterized shapes are binary");
    DeviceRecord { shape, period, spectrum }
}

/// `count` independent random devices with surrogate spectra. Record `i`
/// depends only on `(seed, i)`.
pub fn generate_dataset(count: usize, seed: u64) -> Result<Vec<DeviceRecord>> {
    if count == 0 {
        return Err(Error::InvalidArgument("dataset size must be at least 1".into()));
    }
    let ranges = GenerationRanges::default();
    Ok((0..count as u64).map(|i| generate_record(seed, i, &ranges)).collect())
}

/// The record and its 90°, 180° and 270° rotations; quarter turns exchange
/// the TE and TM halves of the spectrum.
pub fn augment(rec: &DeviceRecord) -> [DeviceRecord; 4] {
    let rotated = |shape, spectrum| DeviceRecord { shape, period: rec.period, spectrum };
    [
        rec.clone(),
        rotated(rec.shape.rot90(), rec.spectrum.swapped()),
        rotated(rec.shape.rot180(), rec.spectrum.clone()),
        rotated(rec.shape.rot270(), rec.spectrum.swapped()),
    ]
}

/// Seeded shuffle followed by a prefix split into (train, validation).
pub fn split<T: Clone>(records: &[T], train_fraction: f64, seed: u64) -> Result<(Vec<T>, Vec<T>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!("train fraction {train_fraction} outside (0, 1)")));
    }
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((records.len() as f64) * train_fraction).round() as usize;
    let pick = |idx: &[usize]| idx.iter().map(|&i| records[i].clone()).collect::<Vec<_>>();
    Ok((pick(&order[..n_train]), pick(&order[n_train..])))
}
