use crate::datagen::{Period, ShapeImage, Spectrum, IMAGE_PIXELS};
use crate::error::{Error, Result};
use crate::models::arch::SimulatorArch;
use crate::models::{bind, expand_period_plane, norm_layer, update_running, Binding, NormUpdate};
use crate::nn::{init_weights, Activation, ParamStore, Real, Tape, Tensor, Var};

/// Forward surrogate network: `[N, 2, 64, 64]` (shape, period plane) to 58
/// transmittances.
pub struct SimulatorModel<T = f32> {
    arch: SimulatorArch,
    store: ParamStore<T>,
    frozen: bool,
}

impl<T: Real> SimulatorModel<T> {
    pub fn build(arch: SimulatorArch, seed: u64) -> Result<Self> {
        let mut store = ParamStore::new();
        for (name, kind, dims) in arch.param_specs()? {
            store.register(&name, kind, &dims)?;
        }
        init_weights(&mut store, seed);
        Ok(SimulatorModel { arch, store, frozen: false })
    }

    pub(crate) fn from_parts(arch: SimulatorArch, store: ParamStore<T>) -> Self {
        SimulatorModel { arch, store, frozen: false }
    }

    pub fn arch(&self) -> &SimulatorArch {
        &self.arch
    }

    pub fn store(&self) -> &ParamStore<T> {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.store
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    /// Training-mode pass: batch statistics, trainable parameters, running
    /// statistics updated.
    pub fn forward_train(&mut self, tape: &mut Tape<T>, input: Var) -> Result<Var> {
        if self.frozen {
            return Err(Error::InvalidArgument("frozen simulator cannot train".into()));
        }
        let mut updates = Vec::new();
        let out = self.forward_impl(tape, input, Binding::Train, Some(&mut updates))?;
        update_running(&mut self.store, &updates);
        Ok(out)
    }

    /// Inference pass with running statistics and constant parameters.
    pub fn forward_eval(&self, tape: &mut Tape<T>, input: Var) -> Result<Var> {
        self.forward_impl(tape, input, Binding::Frozen, None)
    }

    fn forward_impl(
        &self,
        tape: &mut Tape<T>,
        input: Var,
        binding: Binding,
        mut updates: Option<&mut Vec<NormUpdate>>,
    ) -> Result<Var> {
        let a = &self.arch;
        let side = a.image_side;
        let d = tape.value(input).dims().to_vec();
        if d.len() != 4 || d[1..] != [2, side, side] {
            return Err(Error::shape("simulator", format!("expected [N, 2, {side}, {side}], got {d:?}")));
        }
        let n = d[0];
        let p = |name: &str, tape: &mut Tape<T>| bind(tape, &self.store, name, binding);
        let mut x = input;
        for b in 0..a.blocks() {
            let (k, bias) = (p(&format!("conv{b}.weight"), tape)?, p(&format!("conv{b}.bias"), tape)?);
            x = tape.conv2d(x, k, bias, a.stride, a.padding)?;
            x = norm_layer(tape, &self.store, x, &format!("norm{b}"), binding, updates.as_deref_mut())?;
            x = tape.activation(x, Activation::LeakyRelu);
        }
        x = tape.reshape(x, &[n, a.flat_features()?])?;
        for j in 0..a.hidden.len() {
            let (w, bias) = (p(&format!("fc{j}.weight"), tape)?, p(&format!("fc{j}.bias"), tape)?);
            x = tape.linear(x, w, bias)?;
            if a.hidden_norm {
                x = norm_layer(tape, &self.store, x, &format!("fcnorm{j}"), binding, updates.as_deref_mut())?;
            }
            x = tape.activation(x, Activation::LeakyRelu);
        }
        let (w, bias) = (p("head.weight", tape)?, p("head.bias", tape)?);
        x = tape.linear(x, w, bias)?;
        Ok(tape.activation(x, Activation::Sigmoid))
    }

    /// Batched inference on raw (possibly non-binary) shapes and periods.
    pub fn simulate_batch(&self, shapes: &[&ShapeImage], periods: &[Period]) -> Result<Vec<Spectrum>> {
        if shapes.len() != periods.len() || shapes.is_empty() {
            return Err(Error::shape("simulate", format!("{} shapes, {} periods", shapes.len(), periods.len())));
        }
        let input = simulator_input(shapes, periods)?;
        let mut tape = Tape::new();
        let x = tape.leaf(input, false);
        let y = self.forward_eval(&mut tape, x)?;
        tape.value(y)
            .values()
            .chunks(self.arch.outputs)
            .map(|row| Spectrum::from_f64(&row.iter().map(|v| v.f64()).collect::<Vec<_>>()))
            .collect()
    }

    pub fn simulate(&self, shape: &ShapeImage, period: Period) -> Result<Spectrum> {
        Ok(self.simulate_batch(&[shape], &[period])?.remove(0))
    }
}

/// Stacks each shape with its period plane into `[N, 2, 64, 64]`.
pub fn simulator_input<T: Real>(shapes: &[&ShapeImage], periods: &[Period]) -> Result<Tensor<T>> {
    if shapes.len() != periods.len() {
        return Err(Error::shape("simulator_input", format!("{} shapes, {} periods", shapes.len(), periods.len())));
    }
    let mut values = Vec::with_capacity(shapes.len() * 2 * IMAGE_PIXELS);
    for (s, &p) in shapes.iter().zip(periods) {
        values.extend(s.pixels().iter().map(|&v| T::of(v as f64)));
        values.extend(expand_period_plane(p).iter().map(|&v| T::of(v)));
    }
    Tensor::new(vec![shapes.len(), 2, crate::datagen::IMAGE_SIDE, crate::datagen::IMAGE_SIDE], values)
}
