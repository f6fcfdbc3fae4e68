use metafilter_core::datagen::{generate_dataset, DeviceRecord};
use metafilter_core::encoding::{contrast_vector, gaussian_target};
use metafilter_core::models::{GeneratorArch, GeneratorModel, SimulatorArch, SimulatorModel};
use metafilter_core::pipeline::{
    baseline_traverse, binarization_study, dataset_report, design, eval_generator, eval_simulator, split_dataset,
    train_generator, train_simulator, DesignMode, DesignTarget, TrainConfig,
};
use metafilter_core::Error;

fn tiny_sim() -> SimulatorArch {
    SimulatorArch { channels: vec![2, 2, 4, 4, 4], hidden: vec![8], ..SimulatorArch::default() }
}

fn tiny_gen() -> GeneratorArch {
    GeneratorArch { noise_dim: 3, channels: vec![4, 4, 2, 2, 1], period_hidden: 4, ..GeneratorArch::default() }
}

fn sim_cfg() -> TrainConfig {
    TrainConfig { epochs: 4, batch_size: 16, seed: 3, ..TrainConfig::simulator_desk() }
}

fn gen_cfg() -> TrainConfig {
    TrainConfig { epochs: 3, batch_size: 16, seed: 4, ..TrainConfig::generator_desk() }
}

fn data() -> (Vec<DeviceRecord>, Vec<DeviceRecord>) {
    split_dataset(&generate_dataset(80, 2).unwrap(), 1).unwrap()
}

fn frozen_sim(train: &[DeviceRecord], val: &[DeviceRecord]) -> SimulatorModel {
    let (mut sim, _) = train_simulator(train, val, tiny_sim(), &sim_cfg()).unwrap();
    sim.freeze();
    sim
}

fn bits(sim: &SimulatorModel) -> Vec<u32> {
    sim.store().iter().flat_map(|(_, p)| p.value.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>()).collect()
}

#[test]
fn simulator_training_is_deterministic() {
    let (tr, va) = data();
    let (a, ca) = train_simulator(&tr, &va, tiny_sim(), &sim_cfg()).unwrap();
    let (b, cb) = train_simulator(&tr, &va, tiny_sim(), &sim_cfg()).unwrap();
    assert_eq!(ca, cb);
    assert_eq!(bits(&a), bits(&b));
    assert_eq!(ca.epochs.len(), 4);
    assert!(ca.initial_val.is_some());
    let mut frozen = a;
    frozen.freeze();
    let (ra, rb) = (eval_simulator(&frozen, &va).unwrap(), eval_simulator(&frozen, &va).unwrap());
    assert_eq!(ra.per_sample, rb.per_sample);
    assert_eq!(ra.per_sample.len(), va.len());
}

#[test]
fn empty_and_unfrozen_inputs_are_rejected() {
    let (tr, va) = data();
    assert!(matches!(train_simulator(&[], &va, tiny_sim(), &sim_cfg()), Err(Error::EmptyDataset)));
    let sim = SimulatorModel::<f32>::build(tiny_sim(), 0).unwrap();
    assert!(matches!(train_generator(&tr, &va, &sim, tiny_gen(), &gen_cfg()), Err(Error::SimulatorNotFrozen)));
    let mut sim = sim;
    sim.freeze();
    assert!(matches!(train_generator(&[], &va, &sim, tiny_gen(), &gen_cfg()), Err(Error::EmptyDataset)));
    assert!(eval_simulator(&sim, &[]).is_err());
}

#[test]
fn generator_training_leaves_simulator_untouched() {
    let (tr, va) = data();
    let sim = frozen_sim(&tr, &va);
    let before = bits(&sim);
    let (g1, c1) = train_generator(&tr, &va, &sim, tiny_gen(), &gen_cfg()).unwrap();
    assert_eq!(bits(&sim), before);
    let (g2, c2) = train_generator(&tr, &va, &sim, tiny_gen(), &gen_cfg()).unwrap();
    assert_eq!(c1, c2);
    let e1 = eval_generator(&g1, Some(&sim), &va, 2, 9).unwrap();
    let e2 = eval_generator(&g2, Some(&sim), &va, 2, 9).unwrap();
    assert_eq!((e1.report.per_sample, e1.best_seed), (e2.report.per_sample, e2.best_seed));
    assert!(c1.epochs.iter().all(|e| e.near_binarity.is_some()));
}

#[test]
fn zero_alpha_leaves_spectrum_loss_only() {
    let (tr, va) = data();
    let sim = frozen_sim(&tr, &va);
    let cfg = TrainConfig { epochs: 1, alpha: 0.0, beta: 0.0, ..gen_cfg() };
    let (_, curve) = train_generator(&tr, &[], &sim, tiny_gen(), &cfg).unwrap();
    // with the SSIM and period terms off the objective is a mean of MSEs in [0, 1]
    let e = &curve.epochs[0];
    assert!(e.train >= 0.0 && e.train <= 1.0);
    let heavy = TrainConfig { epochs: 1, alpha: 0.0, beta: 50.0, ..gen_cfg() };
    let (_, heavy_curve) = train_generator(&tr, &[], &sim, tiny_gen(), &heavy).unwrap();
    assert!(heavy_curve.epochs[0].train > e.train);
}

#[test]
fn best_of_k_never_gets_worse() {
    let (tr, va) = data();
    let gen = GeneratorModel::<f32>::build(tiny_gen(), 5).unwrap();
    let _ = tr;
    let mut last: Option<Vec<f64>> = None;
    for k in 1..=4 {
        let e = eval_generator(&gen, None, &va, k, 21).unwrap();
        assert!(e.simulator_mse.is_none());
        if let Some(prev) = &last {
            for (a, b) in e.report.per_sample.iter().zip(prev) {
                assert!(a <= b);
            }
        }
        last = Some(e.report.per_sample);
    }
    assert!(eval_generator(&gen, None, &va, 0, 21).is_err());
}

#[test]
fn design_rankings_and_modes() {
    let gen = GeneratorModel::<f32>::build(tiny_gen(), 6).unwrap();
    let target = gaussian_target(600.0, 40.0, 0.9).unwrap();
    for mode in [DesignMode::Encoded, DesignMode::SemiRandom] {
        let c = design(&gen, &DesignTarget::Spectrum(target.clone()), 4, mode, 8).unwrap();
        assert_eq!(c.len(), 4);
        assert!(c.windows(2).all(|w| w[0].mse <= w[1].mse));
        assert!(c.iter().all(|x| x.shape().is_binary()));
    }
    let semi = design(&gen, &DesignTarget::Spectrum(target.clone()), 4, DesignMode::SemiRandom, 8).unwrap();
    assert!(semi.iter().all(|c| c.contrast.tm()[4] == 0.01));
    let by_contrast = design(&gen, &DesignTarget::Contrast(contrast_vector(&target)), 2, DesignMode::Encoded, 8).unwrap();
    assert_eq!(by_contrast.len(), 2);
    assert!(design(&gen, &DesignTarget::Contrast(contrast_vector(&target)), 2, DesignMode::SemiRandom, 8).is_err());
    assert!(design(&gen, &DesignTarget::Spectrum(target), 0, DesignMode::Encoded, 8).is_err());
}

#[test]
fn baseline_traversal() {
    let data = generate_dataset(60, 7).unwrap();
    let hit = baseline_traverse(&data, &data[17].spectrum).unwrap();
    assert_eq!((hit.index, hit.mse), (17, 0.0));
    let g = gaussian_target(600.0, 40.0, 0.9).unwrap();
    let best = baseline_traverse(&data, &g).unwrap();
    assert!(best.mse > 0.0);
    let mut rev = data.clone();
    rev.reverse();
    let other = baseline_traverse(&rev, &g).unwrap();
    assert_eq!(other.record, best.record);
    let mut dup = data.clone();
    dup.push(data[17].clone());
    assert_eq!(baseline_traverse(&dup, &data[17].spectrum).unwrap().index, 17);
    assert!(baseline_traverse(&[], &g).is_err());
}

#[test]
fn dataset_report_is_canonical() {
    let data = generate_dataset(50, 8).unwrap();
    let r = dataset_report(&data).unwrap();
    assert_eq!(r.rows.len(), 50);
    assert!(r.rows.windows(2).all(|w| w[0].0 <= w[1].0));
    assert_eq!(r.histogram.iter().map(|h| h.1).sum::<usize>(), 50);
    let mut shuffled = data.clone();
    shuffled.rotate_left(13);
    assert_eq!(dataset_report(&shuffled).unwrap(), r);
    assert!(r.to_csv().lines().count() == 51);
}

#[test]
fn binarization_study_reports_per_device() {
    let (tr, va) = data();
    let sim = frozen_sim(&tr, &va);
    let gen = GeneratorModel::<f32>::build(tiny_gen(), 7).unwrap();
    let s = binarization_study(&gen, &sim, &va, 3).unwrap();
    assert_eq!(s.raw_mse.len(), va.len());
    let mean = s.raw_mse.iter().zip(&s.binarized_mse).map(|(a, b)| (a - b).abs()).sum::<f64>() / va.len() as f64;
    assert!((mean - s.mean_abs_diff).abs() < 1e-15);
}

#[test]
fn augmentation_changes_the_epoch() {
    let (tr, _) = data();
    let cfg = TrainConfig { epochs: 1, batch_size: tr.len() * 8, ..sim_cfg() };
    // one batch spans the whole (augmented) split
    let (_, a) = train_simulator(&tr, &[], tiny_sim(), &cfg).unwrap();
    let (_, b) = train_simulator(&tr, &[], tiny_sim(), &TrainConfig { augment: false, ..cfg.clone() }).unwrap();
    assert_ne!(a.epochs[0].train, b.epochs[0].train);
}
