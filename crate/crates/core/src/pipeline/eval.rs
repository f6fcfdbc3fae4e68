use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datagen::{surrogate_spectrum, wavelength_nm, DeviceRecord, Period, ShapeImage, Spectrum, HALF_LEN};
use crate::encoding::{contrast_vector, extremum_band, semi_random_contrast, ContrastVector, Polarity};
use crate::error::{Error, Result};
use crate::metrics::{binarize, mean_manhattan_to_binary, mse, BINARIZE_THRESHOLD};
use crate::models::{condition_features, uniform_noise, GeneratorModel, SimulatorModel};
use crate::pipeline::train::simulator_mse;

/// Per-sample errors with summary statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_sample: Vec<f64>,
    pub mean: f64,
    pub median: f64,
    /// Mean distance of raw generated pixels to {0, 1} (generator only).
    pub near_binarity: Option<f64>,
    pub runtime_s: f64,
    pub config: serde_json::Value,
}

impl EvalReport {
    pub fn from_samples(per_sample: Vec<f64>, near_binarity: Option<f64>, runtime_s: f64, config: serde_json::Value) -> Result<Self> {
        if per_sample.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let (mean, median) = summarize(&per_sample);
        Ok(EvalReport { per_sample, mean, median, near_binarity, runtime_s, config })
    }
}

/// `(mean, median)`; the median of an even count averages the middle pair.
pub fn summarize(v: &[f64]) -> (f64, f64) {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let k = s.len() / 2;
    let median = if s.len() % 2 == 1 { s[k] } else { 0.5 * (s[k - 1] + s[k]) };
    (mean, median)
}

pub fn eval_simulator(sim: &SimulatorModel, records: &[DeviceRecord]) -> Result<EvalReport> {
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let start = Instant::now();
    let per = simulator_mse(sim, records)?;
    let config = serde_json::json!({ "records": records.len(), "arch": sim.arch() });
    EvalReport::from_samples(per, None, start.elapsed().as_secs_f64(), config)
}

/// Noise for candidate `j` of target `i`.
pub fn candidate_noise(seed: u64, target: u64, candidate: u64, dim: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ target.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    rng.set_stream(candidate);
    uniform_noise(dim, &mut rng)
}

/// One generated, binarized and oracle-checked device.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub contrast: ContrastVector,
    /// Raw generator image before thresholding.
    #[serde(skip)]
    pub raw: Option<ShapeImage>,
    #[serde(skip)]
    pub shape: Option<ShapeImage>,
    pub period: Period,
    pub period_nm: f64,
    pub spectrum: Spectrum,
    pub near_binarity: f64,
    pub mse: f64,
}

impl Candidate {
    pub fn shape(&self) -> &ShapeImage {
        self.shape.as_ref().expect("candidate shapes are kept in memory")
    }

    pub fn raw(&self) -> &ShapeImage {
        self.raw.as_ref().expect("candidate images are kept in memory")
    }
}

/// Generates one device per noise vector, binarizes at 0.5, rounds the
/// period and scores the oracle spectrum against `target`.
fn realize(gen: &GeneratorModel, contrasts: &[ContrastVector], noise: &[Vec<f64>], target: &Spectrum) -> Result<Vec<Candidate>> {
    let cs: Vec<&ContrastVector> = contrasts.iter().collect();
    let zs: Vec<&[f64]> = noise.iter().map(|z| z.as_slice()).collect();
    let t = target.to_f64();
    gen.generate_batch(&cs, &zs)?
        .into_iter()
        .zip(contrasts)
        .map(|(g, c)| {
            let shape = binarize(&g.image, BINARIZE_THRESHOLD);
            let period = g.period();
            let spectrum = surrogate_spectrum(&shape, period)?;
            Ok(Candidate {
                contrast: c.clone(),
                near_binarity: mean_manhattan_to_binary(&g.image),
                mse: mse(&spectrum.to_f64(), &t)?,
                raw: Some(g.image),
                shape: Some(shape),
                period,
                period_nm: g.period_nm,
                spectrum,
            })
        })
        .collect()
}

/// Best-of-`k` oracle evaluation of a generator on held-out records.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorEval {
    pub report: EvalReport,
    /// Index of the winning seed per target.
    pub best_seed: Vec<usize>,
    /// Simulator-predicted MSE of each winning device, when a simulator is given.
    pub simulator_mse: Option<Vec<f64>>,
}

pub fn eval_generator(
    gen: &GeneratorModel,
    sim: Option<&SimulatorModel>,
    records: &[DeviceRecord],
    seeds_per_target: usize,
    seed: u64,
) -> Result<GeneratorEval> {
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if seeds_per_target == 0 {
        return Err(Error::InvalidArgument("seeds per target must be at least 1".into()));
    }
    let start = Instant::now();
    let (mut per, mut best_seed, mut sim_mse) = (Vec::new(), Vec::new(), Vec::new());
    let mut binarity = 0.0;
    for (i, rec) in records.iter().enumerate() {
        let c = contrast_vector(&rec.spectrum);
        let noise: Vec<Vec<f64>> =
            (0..seeds_per_target).map(|j| candidate_noise(seed, i as u64, j as u64, gen.noise_dim())).collect();
        let cands = realize(gen, &vec![c; seeds_per_target], &noise, &rec.spectrum)?;
        binarity += cands.iter().map(|c| c.near_binarity).sum::<f64>();
        let (j, best) = cands
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.mse.total_cmp(&b.1.mse))
            .expect("at least one candidate");
        per.push(best.mse);
        best_seed.push(j);
        if let Some(sim) = sim {
            let pred = sim.simulate(best.shape(), best.period)?;
            sim_mse.push(mse(&pred.to_f64(), &rec.spectrum.to_f64())?);
        }
    }
    let near = binarity / (records.len() * seeds_per_target) as f64;
    let config = serde_json::json!({
        "records": records.len(),
        "seeds_per_target": seeds_per_target,
        "seed": seed,
        "threshold": BINARIZE_THRESHOLD,
        "arch": gen.arch(),
    });
    Ok(GeneratorEval {
        report: EvalReport::from_samples(per, Some(near), start.elapsed().as_secs_f64(), config)?,
        best_seed,
        simulator_mse: sim.map(|_| sim_mse),
    })
}

/// Raw versus binarized simulator error for generated devices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinarizationStudy {
    /// `mse(sim(raw), oracle)` per device.
    pub raw_mse: Vec<f64>,
    /// `mse(sim(binarized), oracle)` per device.
    pub binarized_mse: Vec<f64>,
    pub mean_abs_diff: f64,
}

/// One device per record (first candidate noise), compared against the
/// oracle spectrum of its binarized form.
pub fn binarization_study(gen: &GeneratorModel, sim: &SimulatorModel, records: &[DeviceRecord], seed: u64) -> Result<BinarizationStudy> {
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let (mut raw_mse, mut bin_mse) = (Vec::new(), Vec::new());
    for (i, rec) in records.iter().enumerate() {
        let noise = vec![candidate_noise(seed, i as u64, 0, gen.noise_dim())];
        let cand = realize(gen, &[contrast_vector(&rec.spectrum)], &noise, &rec.spectrum)?.remove(0);
        let truth = cand.spectrum.to_f64();
        let preds = sim.simulate_batch(&[cand.raw(), cand.shape()], &[cand.period, cand.period])?;
        raw_mse.push(mse(&preds[0].to_f64(), &truth)?);
        bin_mse.push(mse(&preds[1].to_f64(), &truth)?);
    }
    let mean_abs_diff = raw_mse.iter().zip(&bin_mse).map(|(a, b)| (a - b).abs()).sum::<f64>() / raw_mse.len() as f64;
    Ok(BinarizationStudy { raw_mse, binarized_mse: bin_mse, mean_abs_diff })
}

/// Nearest dataset record by spectrum MSE.
#[derive(Clone, Debug, PartialEq)]
pub struct Traversal {
    pub index: usize,
    pub record: DeviceRecord,
    pub mse: f64,
}

/// Exhaustive search; ties go to the lowest index.
pub fn baseline_traverse(dataset: &[DeviceRecord], target: &Spectrum) -> Result<Traversal> {
    let t = target.to_f64();
    let mut best: Option<(usize, f64)> = None;
    for (i, rec) in dataset.iter().enumerate() {
        let e = mse(&rec.spectrum.to_f64(), &t)?;
        if best.map_or(true, |(_, b)| e < b) {
            best = Some((i, e));
        }
    }
    let (index, mse) = best.ok_or(Error::EmptyDataset)?;
    Ok(Traversal { index, record: dataset[index].clone(), mse })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DesignMode {
    /// Contrast vector computed from the target spectrum.
    Encoded,
    /// Synthetic valley vectors at the target's TM-minimum band.
    SemiRandom,
}

impl std::str::FromStr for DesignMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "encoded" => Ok(DesignMode::Encoded),
            "semi-random" | "semi_random" => Ok(DesignMode::SemiRandom),
            _ => Err(Error::InvalidArgument(format!("unknown design mode `{s}`"))),
        }
    }
}

/// What a design run aims at.
#[derive(Clone, Debug, PartialEq)]
pub enum DesignTarget {
    Spectrum(Spectrum),
    /// Only the contrast vector is known; candidates are ranked by squared
    /// distance between log-contrasts.
    Contrast(ContrastVector),
}

/// Candidates ranked by nondecreasing score.
pub fn design(gen: &GeneratorModel, target: &DesignTarget, num_seeds: usize, mode: DesignMode, seed: u64) -> Result<Vec<Candidate>> {
    if num_seeds == 0 {
        return Err(Error::InvalidArgument("number of seeds must be at least 1".into()));
    }
    let contrasts: Vec<ContrastVector> = match (mode, target) {
        (DesignMode::Encoded, DesignTarget::Spectrum(s)) => vec![contrast_vector(s); num_seeds],
        (DesignMode::Encoded, DesignTarget::Contrast(c)) => vec![c.clone(); num_seeds],
        (DesignMode::SemiRandom, DesignTarget::Spectrum(s)) => {
            let tm: Vec<f64> = s.tm().iter().map(|&v| v as f64).collect();
            let band = extremum_band(&tm, Polarity::Valley);
            (0..num_seeds)
                .map(|j| semi_random_contrast(band, Polarity::Valley, seed.wrapping_add(j as u64)))
                .collect::<Result<_>>()?
        }
        (DesignMode::SemiRandom, DesignTarget::Contrast(_)) => {
            return Err(Error::InvalidArgument("semi-random design needs a target spectrum".into()))
        }
    };
    let noise: Vec<Vec<f64>> = (0..num_seeds).map(|j| candidate_noise(seed, 0, j as u64, gen.noise_dim())).collect();
    let mut cands = match target {
        DesignTarget::Spectrum(s) => realize(gen, &contrasts, &noise, s)?,
        DesignTarget::Contrast(c) => {
            let placeholder = Spectrum::from_f64(&[0.0; crate::datagen::SPECTRUM_LEN])?;
            let want = condition_features(c);
            let mut cands = realize(gen, &contrasts, &noise, &placeholder)?;
            for cand in &mut cands {
                let got = condition_features(&contrast_vector(&cand.spectrum));
                cand.mse = mse(&got, &want)?;
            }
            cands
        }
    };
    cands.sort_by(|a, b| a.mse.total_cmp(&b.mse));
    Ok(cands)
}

/// TM halves sorted by the wavelength of their minimum, plus a histogram of
/// those wavelengths.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetReport {
    /// `(argmin wavelength, TM half)` rows in report order.
    pub rows: Vec<(f64, Vec<f32>)>,
    /// `(wavelength, count)` for every sampled wavelength.
    pub histogram: Vec<(f64, usize)>,
}

fn argmin(v: &[f32]) -> usize {
    v.iter().enumerate().fold(0, |best, (k, &x)| if x < v[best] { k } else { best })
}

pub fn dataset_report(dataset: &[DeviceRecord]) -> Result<DatasetReport> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut rows: Vec<(usize, Vec<f32>)> = dataset.iter().map(|r| (argmin(r.spectrum.tm()), r.spectrum.tm().to_vec())).collect();
    rows.sort_by(|a, b| {
        a.0.cmp(&b.0).then_with(|| {
            a.1.iter().zip(&b.1).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
        })
    });
    let mut counts = vec![0usize; HALF_LEN];
    for (k, _) in &rows {
        counts[*k] += 1;
    }
    Ok(DatasetReport {
        rows: rows.into_iter().map(|(k, v)| (wavelength_nm(k), v)).collect(),
        histogram: counts.into_iter().enumerate().map(|(k, c)| (wavelength_nm(k), c)).collect(),
    })
}

impl DatasetReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("argmin_nm");
        for k in 0..HALF_LEN {
            s += &format!(",t{}", wavelength_nm(k));
        }
        s.push('\n');
        for (nm, row) in &self.rows {
            s += &format!("{nm}");
            for v in row {
                s += &format!(",{v}");
            }
            s.push('\n');
        }
        s
    }
}
