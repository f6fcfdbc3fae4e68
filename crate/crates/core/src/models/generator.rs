use rand::Rng;

use crate::datagen::{Period, ShapeImage, PERIOD_MAX, PERIOD_MIN};
use crate::encoding::{ContrastVector, CONTRAST_LEN};
use crate::error::{Error, Result};
use crate::models::arch::GeneratorArch;
use crate::models::{bind, norm_layer, update_running, Binding, NormUpdate};
use crate::nn::{init_weights, Activation, ParamStore, Real, Tape, Tensor, Var};

/// Contrasts enter the network as `ln c` clipped to `±CONDITION_CLAMP`.
pub const CONDITION_CLAMP: f64 = 5.0;

pub fn condition_features(c: &ContrastVector) -> [f64; CONTRAST_LEN] {
    c.values().map(|v| v.ln().clamp(-CONDITION_CLAMP, CONDITION_CLAMP))
}

/// One generated device before binarization.
#[derive(Clone, Debug, PartialEq)]
pub struct Generated {
    pub image: ShapeImage,
    /// Real-valued period in [200, 400] nm.
    pub period_nm: f64,
}

impl Generated {
    /// Period rounded to the nearest integer nanometre.
    pub fn period(&self) -> Period {
        Period::from_real(self.period_nm)
    }
}

/// Rows of `[condition features, noise]`.
pub fn generator_input<T: Real>(arch: &GeneratorArch, contrasts: &[&ContrastVector], noise: &[&[f64]]) -> Result<Tensor<T>> {
    if contrasts.len() != noise.len() || contrasts.is_empty() {
        return Err(Error::shape("generator_input", format!("{} contrasts, {} noise vectors", contrasts.len(), noise.len())));
    }
    if arch.condition_dim != CONTRAST_LEN {
        return Err(Error::InvalidArgument(format!("condition width {} != {CONTRAST_LEN}", arch.condition_dim)));
    }
    let mut values = Vec::with_capacity(contrasts.len() * arch.input_dim());
    for (c, z) in contrasts.iter().zip(noise) {
        if z.len() != arch.noise_dim {
            return Err(Error::shape("generate", format!("noise has {} values, model expects {}", z.len(), arch.noise_dim)));
        }
        if let Some(v) = z.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::OutOfRange(format!("noise value {v} outside [0, 1]")));
        }
        values.extend(condition_features(c).iter().map(|&v| T::of(v)));
        values.extend(z.iter().map(|&v| T::of(v)));
    }
    Tensor::new(vec![contrasts.len(), arch.input_dim()], values)
}

/// Uniform [0, 1) noise vector.
pub fn uniform_noise<R: Rng>(dim: usize, rng: &mut R) -> Vec<f64> {
    (0..dim).map(|_| rng.gen::<f64>()).collect()
}

/// Inverse network: contrast + noise to shape image and period.
pub struct GeneratorModel<T = f32> {
    arch: GeneratorArch,
    store: ParamStore<T>,
}

impl<T: Real> GeneratorModel<T> {
    pub fn build(arch: GeneratorArch, seed: u64) -> Result<Self> {
        let mut store = ParamStore::new();
        for (name, kind, dims) in arch.param_specs()? {
            store.register(&name, kind, &dims)?;
        }
        init_weights(&mut store, seed);
        Ok(GeneratorModel { arch, store })
    }

    pub(crate) fn from_parts(arch: GeneratorArch, store: ParamStore<T>) -> Self {
        GeneratorModel { arch, store }
    }

    pub fn arch(&self) -> &GeneratorArch {
        &self.arch
    }

    pub fn noise_dim(&self) -> usize {
        self.arch.noise_dim
    }

    pub fn store(&self) -> &ParamStore<T> {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.store
    }

    /// Training pass; returns the image `[N, 1, S, S]` and the normalized
    /// period `[N, 1]` in (0, 1).
    pub fn forward_train(&mut self, tape: &mut Tape<T>, input: Var) -> Result<(Var, Var)> {
        let mut updates = Vec::new();
        let out = self.forward_impl(tape, input, Binding::Train, Some(&mut updates))?;
        update_running(&mut self.store, &updates);
        Ok(out)
    }

    /// Inference pass with running statistics. With `tracked`, parameter
    /// gradients are still collected.
    pub fn forward_eval(&self, tape: &mut Tape<T>, input: Var, tracked: bool) -> Result<(Var, Var)> {
        let binding = if tracked { Binding::EvalTracked } else { Binding::Frozen };
        self.forward_impl(tape, input, binding, None)
    }

    fn forward_impl(
        &self,
        tape: &mut Tape<T>,
        input: Var,
        binding: Binding,
        mut updates: Option<&mut Vec<NormUpdate>>,
    ) -> Result<(Var, Var)> {
        let a = &self.arch;
        let d = tape.value(input).dims().to_vec();
        if d.len() != 2 || d[1] != a.input_dim() {
            return Err(Error::shape("generator", format!("expected [N, {}], got {d:?}", a.input_dim())));
        }
        let n = d[0];
        let (side, pixels) = (a.image_side, a.pixels());
        let p = |name: &str, tape: &mut Tape<T>| bind(tape, &self.store, name, binding);

        let (w, b) = (p("expand.weight", tape)?, p("expand.bias", tape)?);
        let mut h = tape.linear(input, w, b)?;
        h = tape.reshape(h, &[n, a.channels[0], a.seed_side, a.seed_side])?;
        h = norm_layer(tape, &self.store, h, "norm_in", binding, updates.as_deref_mut())?;
        h = tape.activation(h, Activation::LeakyRelu);
        let last = a.channels.len() - 2;
        for blk in 0..=last {
            let (k, bias) = (p(&format!("deconv{blk}.weight"), tape)?, p(&format!("deconv{blk}.bias"), tape)?);
            h = tape.conv_transpose2d(h, k, bias, a.stride, a.padding)?;
            if blk != last {
                h = norm_layer(tape, &self.store, h, &format!("norm{blk}"), binding, updates.as_deref_mut())?;
                h = tape.activation(h, Activation::LeakyRelu);
            }
        }
        let (w, b) = (p("shortcut.weight", tape)?, p("shortcut.bias", tape)?);
        let sc = tape.linear(input, w, b)?;
        let sc = tape.reshape(sc, &[n, 1, side, side])?;
        let logits = tape.add(h, sc)?;
        let image = tape.activation(logits, Activation::Sigmoid);

        let flat = tape.reshape(image, &[n, pixels])?;
        let (w, b) = (p("period_fc.weight", tape)?, p("period_fc.bias", tape)?);
        let mut q = tape.linear(flat, w, b)?;
        q = tape.activation(q, Activation::LeakyRelu);
        let (w, b) = (p("period_head.weight", tape)?, p("period_head.bias", tape)?);
        q = tape.linear(q, w, b)?;
        let period = tape.activation(q, Activation::Sigmoid);
        Ok((image, period))
    }

    pub fn generate_batch(&self, contrasts: &[&ContrastVector], noise: &[&[f64]]) -> Result<Vec<Generated>> {
        let input = generator_input::<T>(&self.arch, contrasts, noise)?;
        let mut tape = Tape::new();
        let x = tape.leaf(input, false);
        let (img, per) = self.forward_eval(&mut tape, x, false)?;
        let pixels = self.arch.pixels();
        let imgs = tape.value(img).values();
        let span = (PERIOD_MAX - PERIOD_MIN) as f64;
        tape.value(per)
            .values()
            .iter()
            .enumerate()
            .map(|(i, u)| {
                let px = imgs[i * pixels..][..pixels].iter().map(|v| v.f64() as f32).collect();
                Ok(Generated { image: ShapeImage::new(px)?, period_nm: PERIOD_MIN as f64 + span * u.f64() })
            })
            .collect()
    }

    pub fn generate(&self, contrast: &ContrastVector, noise: &[f64]) -> Result<Generated> {
        Ok(self.generate_batch(&[contrast], &[noise])?.remove(0))
    }
}
