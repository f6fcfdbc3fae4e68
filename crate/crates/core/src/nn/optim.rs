//! Named parameter storage, Adam and step learning-rate decay.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Real, Tape, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Role of a stored array; decides initialization and whether Adam touches it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    Weight,
    Bias,
    /// Normalization gain.
    Scale,
    /// Normalization offset.
    Shift,
    RunningMean,
    RunningVar,
}

impl ParamKind {
    pub fn trainable(self) -> bool {
        !matches!(self, ParamKind::RunningMean | ParamKind::RunningVar)
    }
}

#[derive(Clone, Debug)]
pub struct Param<T> {
    pub name: String,
    pub kind: ParamKind,
    pub value: Tensor<T>,
    grad: Vec<T>,
    has_grad: bool,
    m: Vec<T>,
    v: Vec<T>,
}

impl<T: Real> Param<T> {
    pub fn grad(&self) -> Option<&[T]> {
        self.has_grad.then_some(self.grad.as_slice())
    }
}

#[derive(Clone, Debug, Default)]
pub struct ParamStore<T> {
    params: Vec<Param<T>>,
    by_name: BTreeMap<String, ParamId>,
    step: u64,
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore { params: Vec::new(), by_name: BTreeMap::new(), step: 0 }
    }

    pub fn register(&mut self, name: &str, kind: ParamKind, dims: &[usize]) -> Result<ParamId> {
        if self.by_name.contains_key(name) {
            return Err(Error::InvalidArgument(format!("duplicate parameter name `{name}`")));
        }
        let fill = match kind {
            ParamKind::Scale | ParamKind::RunningVar => T::one(),
            _ => T::zero(),
        };
        let value = Tensor::full(dims, fill);
        let n = value.len();
        let id = ParamId(self.params.len());
        self.params.push(Param {
            name: name.to_owned(),
            kind,
            value,
            grad: vec![T::zero(); n],
            has_grad: false,
            m: vec![T::zero(); n],
            v: vec![T::zero(); n],
        });
        self.by_name.insert(name.to_owned(), id);
        Ok(id)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn get(&self, id: ParamId) -> &Param<T> {
        &self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor<T> {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.params[id.0].value
    }

    /// Parameters in registration order.
    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param<T>)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total scalar count over trainable parameters.
    pub fn trainable_scalars(&self) -> usize {
        self.params.iter().filter(|p| p.kind.trainable()).map(|p| p.value.len()).sum()
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.iter_mut().for_each(|g| *g = T::zero());
            p.has_grad = false;
        }
    }

    /// Adds the gradients collected on `tape`'s parameter leaves.
    pub fn accumulate_grads(&mut self, tape: &Tape<T>) {
        for (id, g) in tape.param_grads() {
            let p = &mut self.params[id.0];
            for (dst, &src) in p.grad.iter_mut().zip(g) {
                *dst += src;
            }
            p.has_grad = true;
        }
    }

    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        ParamStore {
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    kind: p.kind,
                    value: p.value.cast(),
                    grad: p.grad.iter().map(|&g| U::of(g.f64())).collect(),
                    has_grad: p.has_grad,
                    m: p.m.iter().map(|&g| U::of(g.f64())).collect(),
                    v: p.v.iter().map(|&g| U::of(g.f64())).collect(),
                })
                .collect(),
            by_name: self.by_name.clone(),
            step: self.step,
        }
    }
}

/// Adam hyperparameters. The defaults are the momentum settings used for
/// both networks; epsilon is the customary 1e-8.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for Adam {
    fn default() -> Self {
        Adam { beta1: 0.5, beta2: 0.999, eps: 1e-8 }
    }
}

impl Adam {
    /// One bias-corrected update of every trainable parameter. Gradients are
    /// left in place; the caller resets them.
    pub fn step<T: Real>(&self, store: &mut ParamStore<T>, lr: f64) -> Result<()> {
        if let Some(p) = store.params.iter().find(|p| p.kind.trainable() && !p.has_grad) {
            return Err(Error::MissingGrad(p.name.clone()));
        }
        store.step += 1;
        let t = store.step as i32;
        let (b1, b2) = (T::of(self.beta1), T::of(self.beta2));
        let (one_b1, one_b2) = (T::of(1.0 - self.beta1), T::of(1.0 - self.beta2));
        let c1 = T::of(1.0 - self.beta1.powi(t));
        let c2 = T::of(1.0 - self.beta2.powi(t));
        let (lr, eps) = (T::of(lr), T::of(self.eps));
        for p in store.params.iter_mut().filter(|p| p.kind.trainable()) {
            let values = p.value.values_mut();
            for i in 0..values.len() {
                let g = p.grad[i];
                p.m[i] = b1 * p.m[i] + one_b1 * g;
                p.v[i] = b2 * p.v[i] + one_b2 * g * g;
                let m_hat = p.m[i] / c1;
                let v_hat = p.v[i] / c2;
                values[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// `initial · gamma^floor(epoch / step)`.
pub fn step_lr(epoch: usize, initial: f64, step: usize, gamma: f64) -> f64 {
    initial * gamma.powi((epoch / step.max(1)) as i32)
}
