use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::nn::{ParamKind, ParamStore, Real};

/// Standard deviation of the initial weight distribution.
pub const INIT_STD: f64 = 0.02;

/// Box–Muller normal sampler over ChaCha8, so draws are identical on every
/// platform for a given seed.
pub struct NormalSampler {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl NormalSampler {
    pub fn new(seed: u64) -> Self {
        NormalSampler { rng: ChaCha8Rng::seed_from_u64(seed), spare: None }
    }

    pub fn from_rng(rng: ChaCha8Rng) -> Self {
        NormalSampler { rng, spare: None }
    }

    pub fn standard(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        // u1 in (0, 1] keeps ln finite
        let u1 = 1.0 - self.rng.gen::<f64>();
        let u2 = self.rng.gen::<f64>();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = std::f64::consts::TAU * u2;
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }

    pub fn sample(&mut self, mean: f64, std: f64) -> f64 {
        mean + std * self.standard()
    }
}

/// Weights ~ N(0, 0.02), normalization gains ~ N(1, 0.02), biases and
/// offsets zero, running statistics reset.
pub fn init_weights<T: Real>(store: &mut ParamStore<T>, seed: u64) {
    init_weights_with_std(store, seed, INIT_STD)
}

/// [`init_weights`] with a custom standard deviation.
pub fn init_weights_with_std<T: Real>(store: &mut ParamStore<T>, seed: u64, std: f64) {
    let mut normal = NormalSampler::new(seed);
    let ids: Vec<_> = store.iter().map(|(id, p)| (id, p.kind)).collect();
    for (id, kind) in ids {
        let values = store.value_mut(id).values_mut();
        match kind {
            ParamKind::Weight => values.iter_mut().for_each(|v| *v = T::of(normal.sample(0.0, std))),
            ParamKind::Scale => values.iter_mut().for_each(|v| *v = T::of(normal.sample(1.0, std))),
            ParamKind::Bias | ParamKind::Shift | ParamKind::RunningMean => {
                values.iter_mut().for_each(|v| *v = T::zero())
            }
            ParamKind::RunningVar => values.iter_mut().for_each(|v| *v = T::one()),
        }
    }
}
