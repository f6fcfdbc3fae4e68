use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datagen::{augment, DeviceRecord, ShapeImage, IMAGE_SIDE};
use crate::encoding::{contrast_vector, ContrastVector};
use crate::error::{Error, Result};
use crate::metrics::{mean_manhattan_to_binary, SsimConfig};
use crate::models::{generator_input, simulator_input, uniform_noise, GeneratorArch, GeneratorModel, SimulatorArch, SimulatorModel};
use crate::nn::{init_weights_with_std, step_lr, Tape};
use crate::pipeline::TrainConfig;

const EVAL_CHUNK: usize = 256;

/// Losses observed in one epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub lr: f64,
    /// Sample-weighted mean of the minibatch objective.
    pub train: f64,
    /// Mean spectrum MSE on the held-out records, if any.
    pub val: Option<f64>,
    /// Generator only: mean distance of generated pixels to {0, 1}.
    pub near_binarity: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossCurve {
    /// Validation loss of the freshly initialized model.
    pub initial_val: Option<f64>,
    pub epochs: Vec<EpochLoss>,
}

impl LossCurve {
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
        let mut s = String::from("epoch,lr,train,val,near_binarity\n");
        for e in &self.epochs {
            s += &format!("{},{:e},{:e},{},{}\n", e.epoch, e.lr, e.train, opt(e.val), opt(e.near_binarity));
        }
        s
    }

    /// Mean training loss over the first and last quarter of epochs.
    pub fn quarter_means(&self) -> Option<(f64, f64)> {
        let n = self.epochs.len();
        let q = n / 4;
        if q == 0 {
            return None;
        }
        let mean = |s: &[EpochLoss]| s.iter().map(|e| e.train).sum::<f64>() / s.len() as f64;
        Some((mean(&self.epochs[..q]), mean(&self.epochs[n - q..])))
    }
}

fn epoch_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64 + 1);
    rng
}

/// Minibatches over a shuffled index list. A trailing remainder shorter than
/// half a batch joins the previous batch: tiny batches give normalization
/// statistics noisy enough to knock training off course.
fn batches(order: &[usize], size: usize) -> Vec<&[usize]> {
    let mut out: Vec<&[usize]> = order.chunks(size).collect();
    if out.len() > 1 && out.last().map_or(false, |b| 2 * b.len() < size) {
        out.pop();
        let k = out.len() - 1;
        out[k] = &order[k * size..];
    }
    out
}

fn spectra_f32(records: &[&DeviceRecord]) -> Vec<f32> {
    records.iter().flat_map(|r| r.spectrum.values().iter().copied()).collect()
}

/// Mean spectrum MSE of the simulator over `records`, plus per-record values.
pub fn simulator_mse(sim: &SimulatorModel, records: &[DeviceRecord]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(records.len());
    for chunk in records.chunks(EVAL_CHUNK) {
        let shapes: Vec<&ShapeImage> = chunk.iter().map(|r| &r.shape).collect();
        let periods: Vec<_> = chunk.iter().map(|r| r.period).collect();
        for (pred, rec) in sim.simulate_batch(&shapes, &periods)?.iter().zip(chunk) {
            out.push(crate::metrics::mse(&pred.to_f64(), &rec.spectrum.to_f64())?);
        }
    }
    Ok(out)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Fits the simulator to `train` (rotations included when `cfg.augment`),
/// reporting validation MSE on `val` after every epoch.
pub fn train_simulator(
    train: &[DeviceRecord],
    val: &[DeviceRecord],
    arch: SimulatorArch,
    cfg: &TrainConfig,
) -> Result<(SimulatorModel, LossCurve)> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let samples: Vec<DeviceRecord> = if cfg.augment { train.iter().flat_map(augment).collect() } else { train.to_vec() };
    let mut sim = SimulatorModel::<f32>::build(arch, cfg.seed)?;
    init_weights_with_std(sim.store_mut(), cfg.seed, cfg.init_std);
    let adam = cfg.adam();
    let initial_val = if val.is_empty() { None } else { Some(mean(&simulator_mse(&sim, val)?)) };
    let mut curve = LossCurve { initial_val, epochs: Vec::new() };
    let mut order: Vec<usize> = (0..samples.len()).collect();

    for epoch in 0..cfg.epochs {
        let lr = step_lr(epoch, cfg.lr, cfg.lr_step, cfg.lr_gamma);
        order.shuffle(&mut epoch_rng(cfg.seed, epoch));
        let mut total = 0.0;
        for batch in batches(&order, cfg.batch_size) {
            let recs: Vec<&DeviceRecord> = batch.iter().map(|&i| &samples[i]).collect();
            let shapes: Vec<&ShapeImage> = recs.iter().map(|r| &r.shape).collect();
            let periods: Vec<_> = recs.iter().map(|r| r.period).collect();
            let mut tape = Tape::new();
            let x = tape.leaf(simulator_input(&shapes, &periods)?, false);
            let y = sim.forward_train(&mut tape, x)?;
            let loss = tape.mse(y, &spectra_f32(&recs))?;
            tape.backward(loss)?;
            total += tape.value(loss).values()[0] as f64 * batch.len() as f64;
            let store = sim.store_mut();
            store.zero_grad();
            store.accumulate_grads(&tape);
            adam.step(store, lr)?;
        }
        let val_loss = if val.is_empty() { None } else { Some(mean(&simulator_mse(&sim, val)?)) };
        let e = EpochLoss { epoch, lr, train: total / samples.len() as f64, val: val_loss, near_binarity: None };
        info!("simulator epoch {epoch}: train {:.5} val {:?}", e.train, e.val);
        curve.epochs.push(e);
    }
    Ok((sim, curve))
}

/// Fixed noise for held-out monitoring, independent of the training stream.
fn monitor_noise(seed: u64, n: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6d6f_6e69_746f_72);
    (0..n).map(|_| uniform_noise(dim, &mut rng)).collect()
}

/// Mean simulator-predicted spectrum MSE of generated devices (raw images,
/// real periods) against the records' spectra.
fn generator_val(gen: &GeneratorModel, sim: &SimulatorModel, val: &[DeviceRecord], contrasts: &[ContrastVector], seed: u64) -> Result<f64> {
    let noise = monitor_noise(seed, val.len(), gen.noise_dim());
    let mut errs = Vec::with_capacity(val.len());
    for (start, chunk) in val.chunks(EVAL_CHUNK).enumerate().map(|(k, c)| (k * EVAL_CHUNK, c)) {
        let cs: Vec<&ContrastVector> = contrasts[start..start + chunk.len()].iter().collect();
        let zs: Vec<&[f64]> = noise[start..start + chunk.len()].iter().map(|z| z.as_slice()).collect();
        let input = generator_input::<f32>(gen.arch(), &cs, &zs)?;
        let mut tape = Tape::new();
        let x = tape.leaf(input, false);
        let (img, per) = gen.forward_eval(&mut tape, x, false)?;
        let plane = tape.broadcast_plane(per, IMAGE_SIDE, IMAGE_SIDE)?;
        let sim_in = tape.concat_channels(img, plane)?;
        let y = sim.forward_eval(&mut tape, sim_in)?;
        for (pred, rec) in tape.value(y).values().chunks(crate::datagen::SPECTRUM_LEN).zip(chunk) {
            let p: Vec<f64> = pred.iter().map(|&v| v as f64).collect();
            errs.push(crate::metrics::mse(&p, &rec.spectrum.to_f64())?);
        }
    }
    Ok(mean(&errs))
}

/// Trains the generator through the frozen simulator on
/// `spectrum MSE + α(1 − SSIM) + β·(period error)²`.
pub fn train_generator(
    train: &[DeviceRecord],
    val: &[DeviceRecord],
    sim: &SimulatorModel,
    arch: GeneratorArch,
    cfg: &TrainConfig,
) -> Result<(GeneratorModel, LossCurve)> {
    cfg.validate()?;
    if !sim.is_frozen() {
        return Err(Error::SimulatorNotFrozen);
    }
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if cfg.augment {
        log::warn!("augmentation is not used for generator training; ignoring the flag");
    }
    let mut gen = GeneratorModel::<f32>::build(arch, cfg.seed)?;
    init_weights_with_std(gen.store_mut(), cfg.seed, cfg.init_std);
    let contrasts: Vec<ContrastVector> = train.iter().map(|r| contrast_vector(&r.spectrum)).collect();
    let val_contrasts: Vec<ContrastVector> = val.iter().map(|r| contrast_vector(&r.spectrum)).collect();
    let ssim_cfg = SsimConfig::default();
    let adam = cfg.adam();
    let initial_val = if val.is_empty() { None } else { Some(generator_val(&gen, sim, val, &val_contrasts, cfg.seed)?) };
    let mut curve = LossCurve { initial_val, epochs: Vec::new() };
    let mut order: Vec<usize> = (0..train.len()).collect();
    let dim = gen.noise_dim();

    for epoch in 0..cfg.epochs {
        let lr = step_lr(epoch, cfg.lr, cfg.lr_step, cfg.lr_gamma);
        let mut rng = epoch_rng(cfg.seed, epoch);
        order.shuffle(&mut rng);
        let (mut total, mut binarity) = (0.0, 0.0);
        for batch in batches(&order, cfg.batch_size) {
            let n = batch.len();
            let cs: Vec<&ContrastVector> = batch.iter().map(|&i| &contrasts[i]).collect();
            let noise: Vec<Vec<f64>> = (0..n).map(|_| uniform_noise(dim, &mut rng)).collect();
            let zs: Vec<&[f64]> = noise.iter().map(|z| z.as_slice()).collect();
            let recs: Vec<&DeviceRecord> = batch.iter().map(|&i| &train[i]).collect();

            let mut tape = Tape::new();
            let x = tape.leaf(generator_input::<f32>(gen.arch(), &cs, &zs)?, false);
            let (img, per) = gen.forward_train(&mut tape, x)?;
            let plane = tape.broadcast_plane(per, IMAGE_SIDE, IMAGE_SIDE)?;
            let sim_in = tape.concat_channels(img, plane)?;
            let y = sim.forward_eval(&mut tape, sim_in)?;
            let spec_loss = tape.mse(y, &spectra_f32(&recs))?;
            let target_px: Vec<f64> = recs.iter().flat_map(|r| r.shape.pixels().iter().map(|&v| v as f64)).collect();
            let ssim = tape.ssim(img, &target_px, ssim_cfg)?;
            let periods: Vec<f32> = recs.iter().map(|r| r.period.normalized() as f32).collect();
            let per_loss = tape.mse(per, &periods)?;
            let loss = tape.affine(&[(spec_loss, 1.0), (ssim, -cfg.alpha), (per_loss, cfg.beta)], cfg.alpha)?;
            tape.backward(loss)?;

            total += tape.value(loss).values()[0] as f64 * n as f64;
            for px in tape.value(img).values().chunks(IMAGE_SIDE * IMAGE_SIDE) {
                binarity += px.iter().map(|&v| (v as f64).min(1.0 - v as f64)).sum::<f64>() / px.len() as f64;
            }
            let store = gen.store_mut();
            store.zero_grad();
            store.accumulate_grads(&tape);
            adam.step(store, lr)?;
        }
        let val_loss = if val.is_empty() { None } else { Some(generator_val(&gen, sim, val, &val_contrasts, cfg.seed)?) };
        let e = EpochLoss {
            epoch,
            lr,
            train: total / train.len() as f64,
            val: val_loss,
            near_binarity: Some(binarity / train.len() as f64),
        };
        info!("generator epoch {epoch}: train {:.5} val {:?} binarity {:.4}", e.train, e.val, binarity / train.len() as f64);
        curve.epochs.push(e);
    }
    Ok((gen, curve))
}

/// Near-binarity of raw generator outputs for a set of inputs.
pub fn generated_binarity(images: &[ShapeImage]) -> f64 {
    mean(&images.iter().map(mean_manhattan_to_binary).collect::<Vec<_>>())
}
