//! Simulator and generator networks, and their checkpoint format.

mod arch;
mod checkpoint;
mod generator;
mod simulator;

pub use arch::{ArchDescriptor, GeneratorArch, ParamSpec, SimulatorArch};
pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, load_generator, load_simulator, save_checkpoint, Checkpoint, Metadata,
    Model, ModelRef, CHECKPOINT_MAGIC,
};
pub use generator::{condition_features, generator_input, uniform_noise, Generated, GeneratorModel, CONDITION_CLAMP};
pub use simulator::{simulator_input, SimulatorModel};

use crate::datagen::{Period, IMAGE_PIXELS};
use crate::error::{Error, Result};
use crate::nn::{BatchStats, ParamStore, Real, Tape, Var, NORM_EPS, NORM_MOMENTUM};

/// Constant plane of the normalized period, `(P − 200)/200`.
pub fn expand_period_plane(period: Period) -> Vec<f64> {
    vec![period.normalized(); IMAGE_PIXELS]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Binding {
    /// Tracked parameters, batch statistics.
    Train,
    /// Constant parameters, running statistics.
    Frozen,
    /// Tracked parameters, running statistics.
    EvalTracked,
}

pub(crate) struct NormUpdate {
    prefix: String,
    stats: BatchStats,
}

pub(crate) fn bind<T: Real>(tape: &mut Tape<T>, store: &ParamStore<T>, name: &str, binding: Binding) -> Result<Var> {
    let id = store.id(name).ok_or_else(|| Error::InvalidArgument(format!("missing parameter `{name}`")))?;
    Ok(match binding {
        Binding::Frozen => tape.frozen(store, id),
        Binding::Train | Binding::EvalTracked => tape.param(store, id),
    })
}

fn stats_of<T: Real>(store: &ParamStore<T>, name: &str) -> Result<Vec<f64>> {
    let id = store.id(name).ok_or_else(|| Error::InvalidArgument(format!("missing parameter `{name}`")))?;
    Ok(store.value(id).values().iter().map(|v| v.f64()).collect())
}

pub(crate) fn norm_layer<T: Real>(
    tape: &mut Tape<T>,
    store: &ParamStore<T>,
    x: Var,
    prefix: &str,
    binding: Binding,
    updates: Option<&mut Vec<NormUpdate>>,
) -> Result<Var> {
    let g = bind(tape, store, &format!("{prefix}.scale"), binding)?;
    let b = bind(tape, store, &format!("{prefix}.shift"), binding)?;
    if binding == Binding::Train {
        let (y, stats) = tape.batch_norm_train(x, g, b, NORM_EPS)?;
        if let Some(u) = updates {
            u.push(NormUpdate { prefix: prefix.to_owned(), stats });
        }
        Ok(y)
    } else {
        let mean = stats_of(store, &format!("{prefix}.running_mean"))?;
        let var = stats_of(store, &format!("{prefix}.running_var"))?;
        tape.batch_norm_eval(x, g, b, &mean, &var, NORM_EPS)
    }
}

/// Exponential moving average of batch statistics; the variance fed to the
/// running estimate is the unbiased one.
pub(crate) fn update_running<T: Real>(store: &mut ParamStore<T>, updates: &[NormUpdate]) {
    for u in updates {
        let unbias = if u.stats.count > 1 { u.stats.count as f64 / (u.stats.count - 1) as f64 } else { 1.0 };
        for (suffix, fresh, scale) in [("running_mean", &u.stats.mean, 1.0), ("running_var", &u.stats.var, unbias)] {
            let Some(id) = store.id(&format!("{}.{suffix}", u.prefix)) else { continue };
            for (r, &f) in store.value_mut(id).values_mut().iter_mut().zip(fresh.iter()) {
                *r = T::of((1.0 - NORM_MOMENTUM) * r.f64() + NORM_MOMENTUM * f * scale);
            }
        }
    }
}
