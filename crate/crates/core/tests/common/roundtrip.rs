//! Randomized contents for format round trips, shared by the property tests
//! and the acceptance run.

use metafilter_core::datagen::{decode_dataset, encode_dataset, DeviceRecord, Period, ShapeImage, Spectrum, RECORD_BYTES};
use metafilter_core::models::{decode_checkpoint, encode_checkpoint, GeneratorArch, GeneratorModel, Metadata, Model, SimulatorArch, SimulatorModel};
use metafilter_core::nn::ParamStore;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn bits(store: &ParamStore<f32>) -> Vec<(String, Vec<u32>)> {
    store.iter().map(|(_, p)| (p.name.clone(), p.value.values().iter().map(|v| v.to_bits()).collect())).collect()
}

/// Overwrites every stored array with arbitrary bit patterns, NaNs included.
pub fn scramble(store: &mut ParamStore<f32>, rng: &mut ChaCha8Rng) {
    let ids: Vec<_> = store.iter().map(|(id, _)| id).collect();
    for id in ids {
        for v in store.value_mut(id).values_mut() {
            *v = f32::from_bits(rng.gen());
        }
    }
}

pub fn small_simulator(rng: &mut ChaCha8Rng) -> SimulatorArch {
    let depth = rng.gen_range(1..4);
    let mut channels = vec![2];
    channels.extend((0..depth).map(|_| rng.gen_range(1..5)));
    let hidden = (0..rng.gen_range(0..3)).map(|_| rng.gen_range(1..9)).collect();
    SimulatorArch { channels, hidden, hidden_norm: rng.gen(), image_side: 16, ..SimulatorArch::default() }
}

pub fn small_generator(rng: &mut ChaCha8Rng) -> GeneratorArch {
    let depth = rng.gen_range(1..3);
    let mut channels: Vec<usize> = (0..depth).map(|_| rng.gen_range(1..5)).collect();
    channels.push(1);
    GeneratorArch {
        noise_dim: rng.gen_range(1..6),
        seed_side: 4,
        channels,
        period_hidden: rng.gen_range(1..6),
        image_side: 4 << depth,
        ..GeneratorArch::default()
    }
}

pub fn arbitrary_record(rng: &mut ChaCha8Rng) -> DeviceRecord {
    let shape = ShapeImage::from_fn(|_, _| rng.gen_bool(0.5) as u8 as f32);
    let period = Period::new(rng.gen_range(200..=400)).unwrap();
    let vals: Vec<f32> = (0..58).map(|_| rng.gen_range(0.0..=1.0f32)).collect();
    DeviceRecord { shape, period, spectrum: Spectrum::new(&vals).unwrap() }
}

fn ensure(ok: bool, what: &str) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(what.to_owned())
    }
}

/// Encode, decode and re-encode up to 11 arbitrary records.
pub fn dataset_trial(seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(0..12);
    let recs: Vec<DeviceRecord> = (0..n).map(|_| arbitrary_record(&mut rng)).collect();
    let bytes = encode_dataset(&recs).map_err(|e| e.to_string())?;
    ensure(bytes.len() == 12 + n * RECORD_BYTES, "dataset length")?;
    let back = decode_dataset(&bytes).map_err(|e| e.to_string())?;
    ensure(back == recs, "decoded records differ")?;
    ensure(encode_dataset(&back).map_err(|e| e.to_string())? == bytes, "re-encoding differs")
}

/// Checkpoint round trip of a random small simulator or generator holding
/// arbitrary f32 bit patterns.
pub fn checkpoint_trial(seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let meta = Metadata { epochs: rng.gen_range(0..10_000), seed, loss_history: rng.gen_bool(0.5).then(|| format!("curve-{seed}.csv")) };
    let e = |e: metafilter_core::Error| e.to_string();
    if rng.gen_bool(0.5) {
        let mut m = SimulatorModel::<f32>::build(small_simulator(&mut rng), seed).map_err(e)?;
        scramble(m.store_mut(), &mut rng);
        let bytes = encode_checkpoint(&m, &meta).map_err(e)?;
        let back = decode_checkpoint(&bytes).map_err(e)?;
        ensure(back.metadata == meta, "metadata differs")?;
        let Model::Simulator(b) = back.model else { return Err("wrong model kind".into()) };
        ensure(b.arch() == m.arch(), "architecture differs")?;
        ensure(bits(b.store()) == bits(m.store()), "parameters differ")?;
        ensure(encode_checkpoint(&b, &meta).map_err(e)? == bytes, "re-encoding differs")
    } else {
        let mut m = GeneratorModel::<f32>::build(small_generator(&mut rng), seed).map_err(e)?;
        scramble(m.store_mut(), &mut rng);
        let bytes = encode_checkpoint(&m, &meta).map_err(e)?;
        let back = decode_checkpoint(&bytes).map_err(e)?;
        ensure(back.metadata == meta, "metadata differs")?;
        let Model::Generator(b) = back.model else { return Err("wrong model kind".into()) };
        ensure(b.arch() == m.arch(), "architecture differs")?;
        ensure(bits(b.store()) == bits(m.store()), "parameters differ")?;
        ensure(encode_checkpoint(&b, &meta).map_err(e)? == bytes, "re-encoding differs")
    }
}
