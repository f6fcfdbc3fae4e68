mod common;

use common::oracles::contrast_reference;
use metafilter_core::datagen::{Spectrum, HALF_LEN};
use metafilter_core::encoding::{
    band_range, contrast7, contrast_vector, extremum_band, gaussian_target, semi_random_contrast, Polarity, BANDS,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_spectrum(rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..2 * HALF_LEN).map(|_| rng.gen_range(0.0..1.0)).collect()
}

#[test]
fn matches_transcription_on_random_spectra() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let t = random_spectrum(&mut rng);
        let c = contrast_vector(&Spectrum::from_f64(&t).unwrap());
        // the library sees the f32-rounded spectrum; so does the oracle
        let stored: Vec<f64> = t.iter().map(|&v| v as f32 as f64).collect();
        let mut want = contrast_reference(&stored[..HALF_LEN]);
        want.extend(contrast_reference(&stored[HALF_LEN..]));
        for (a, b) in c.values().iter().zip(&want) {
            worst = worst.max((a - b).abs());
        }
    }
    assert!(worst <= 1e-12, "max deviation {worst:e}");
}

#[test]
fn windows_cover_and_overlap_once() {
    let mut seen = [0u32; HALF_LEN];
    for b in 0..BANDS {
        for k in band_range(b) {
            seen[k] += 1;
        }
    }
    let shared: Vec<usize> = (0..HALF_LEN).filter(|&k| seen[k] == 2).map(|k| k + 1).collect();
    assert!(seen.iter().all(|&s| s >= 1));
    assert_eq!(shared, vec![5, 9, 13, 17, 21, 25]);
}

#[test]
fn identical_halves_give_identical_groups() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let half: Vec<f64> = (0..HALF_LEN).map(|_| rng.gen_range(0.0..1.0)).collect();
    let t: Vec<f64> = half.iter().chain(&half).copied().collect();
    let c = contrast_vector(&Spectrum::from_f64(&t).unwrap());
    assert_eq!(c.te(), c.tm());
}

#[test]
fn contrast7_rejects_bad_input() {
    assert!(contrast7(&[0.5; 28]).is_err());
    let mut t = [0.5; 29];
    t[4] = 1.2;
    assert!(contrast7(&t).is_err());
}

#[test]
fn semi_random_valley_rule() {
    for seed in 0..20 {
        let c = semi_random_contrast(5, Polarity::Valley, seed).unwrap();
        for (k, &v) in c.values().iter().enumerate() {
            if k == 4 || k == 11 {
                assert_eq!(v, 0.01);
            } else {
                assert!([0.4, 0.5, 0.6].contains(&v), "{v}");
            }
        }
        assert_eq!(c, semi_random_contrast(5, Polarity::Valley, seed).unwrap());
    }
    let four: Vec<_> = (0..4).map(|s| semi_random_contrast(3, Polarity::Valley, s).unwrap()).collect();
    assert!(four.windows(2).any(|w| w[0] != w[1]));
    assert!(semi_random_contrast(0, Polarity::Valley, 0).is_err());
    assert!(semi_random_contrast(8, Polarity::Peak, 0).is_err());
}

#[test]
fn gaussian_target_values() {
    let s = gaussian_target(600.0, 40.0, 0.9).unwrap().to_f64();
    assert!((s[20] - 0.1).abs() < 1e-6);
    assert!((s[0] - (1.0 - 0.9 * (-12.5f64).exp())).abs() < 1e-6);
    // grid points 560 and 640 mirror about 600
    assert_eq!(s[16], s[24]);
    assert_eq!(&s[..HALF_LEN], &s[HALF_LEN..]);
    assert_eq!(extremum_band(&s[HALF_LEN..], Polarity::Valley), 5);
    assert!(gaussian_target(600.0, 0.0, 0.9).is_err());
    assert!(gaussian_target(600.0, 40.0, 1.5).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn scale_invariance(seed in any::<u64>(), k in 0.05f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // powers of two keep the f32 storage exact under scaling
        let k = (2f64).powi((k.log2()).floor() as i32);
        let t = random_spectrum(&mut rng);
        let scaled: Vec<f64> = t.iter().map(|v| v * k).collect();
        let a = contrast_vector(&Spectrum::from_f64(&t).unwrap());
        let b = contrast_vector(&Spectrum::from_f64(&scaled).unwrap());
        prop_assert_eq!(a, b);
    }

    #[test]
    fn flat_spectra_map_to_ones(v in 0.0f64..=1.0) {
        let c = contrast_vector(&Spectrum::from_f64(&[v; 58]).unwrap());
        prop_assert!(c.values().iter().all(|&x| x == 1.0));
    }

    #[test]
    fn unique_maximum_selects_its_bands(pos in 0usize..HALF_LEN, peak in 0.6f64..1.0) {
        let mut t = vec![0.3; 2 * HALF_LEN];
        t[pos] = peak;
        let c = contrast_vector(&Spectrum::from_f64(&t).unwrap());
        for b in 0..BANDS {
            prop_assert_eq!(c.te()[b] > 1.0, band_range(b).contains(&pos));
        }
    }
}
