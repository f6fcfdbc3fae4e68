//! Tape-based reverse-mode differentiation.
//!
//! Every operation appends a node holding its forward value. Nodes are in
//! topological order by construction, so `backward` is a single reverse
//! sweep. Leaves keep their gradients across sweeps (accumulation); interior
//! gradients are dropped as soon as they have been propagated.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{ssim_with_grad, SsimConfig};
use crate::nn::conv::{self, Window};
use crate::nn::real::{gemm, MatRef};
use crate::nn::{ParamId, ParamStore, Real, Tensor};

/// Negative-side slope of the leaky rectifier.
pub const LEAKY_SLOPE: f64 = 0.2;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    LeakyRelu,
    Tanh,
    Sigmoid,
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "leaky_relu" => Ok(Activation::LeakyRelu),
            "tanh" => Ok(Activation::Tanh),
            "sigmoid" => Ok(Activation::Sigmoid),
            other => Err(Error::UnknownActivation(other.to_owned())),
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::LeakyRelu => "leaky_relu",
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
        })
    }
}

impl Activation {
    #[inline]
    pub fn apply<T: Real>(self, x: T) -> T {
        match self {
            Activation::LeakyRelu => {
                if x >= T::zero() {
                    x
                } else {
                    x * T::of(LEAKY_SLOPE)
                }
            }
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => {
                let y = if x >= T::zero() {
                    T::one() / (T::one() + (-x).exp())
                } else {
                    let e = x.exp();
                    e / (T::one() + e)
                };
                // keep the open interval even where the logistic rounds to 0 or 1
                y.max(T::min_positive_value()).min(T::one() - T::epsilon())
            }
        }
    }

    /// Derivative given the input `x` and output `y`.
    #[inline]
    fn derivative<T: Real>(self, x: T, y: T) -> T {
        match self {
            Activation::LeakyRelu => {
                if x >= T::zero() {
                    T::one()
                } else {
                    T::of(LEAKY_SLOPE)
                }
            }
            Activation::Tanh => T::one() - y * y,
            Activation::Sigmoid => y * (T::one() - y),
        }
    }
}

/// Per-channel statistics observed by a training-mode normalization.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    /// Biased (population) variance.
    pub var: Vec<f64>,
    /// Elements per channel.
    pub count: usize,
}

enum Op<T> {
    Leaf,
    Conv2d { input: Var, kernel: Var, bias: Var, stride: usize, padding: usize },
    ConvTranspose2d { input: Var, kernel: Var, bias: Var, stride: usize, padding: usize },
    Linear { input: Var, weight: Var, bias: Var },
    Act { input: Var, kind: Activation },
    Norm { input: Var, gamma: Var, beta: Var, mean: Vec<f64>, inv_std: Vec<f64>, batch_stats: bool },
    Reshape { input: Var },
    Add { a: Var, b: Var },
    ConcatChannels { a: Var, b: Var },
    BroadcastPlane { input: Var },
    Sum { input: Var },
    Mse { input: Var, target: Vec<T> },
    Ssim { input: Var, target: Vec<f64>, cfg: SsimConfig },
    Affine { terms: Vec<(Var, f64)> },
}

struct Node<T> {
    value: Tensor<T>,
    tracked: bool,
    param: Option<ParamId>,
    grad: Option<Vec<T>>,
    op: Op<T>,
}

pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn dims4(op: &'static str, d: &[usize]) -> Result<[usize; 4]> {
    match d {
        &[a, b, c, e] => Ok([a, b, c, e]),
        _ => Err(Error::shape(op, format!("expected 4-d tensor, got {d:?}"))),
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Var {
        let tracked = inputs.iter().any(|v| self.nodes[v.0].tracked);
        self.nodes.push(Node { value, tracked, param: None, grad: None, op });
        Var(self.nodes.len() - 1)
    }

    /// Leaf holding `value`; gradients are collected when `requires_grad`.
    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, tracked: requires_grad, param: None, grad: None, op: Op::Leaf });
        Var(self.nodes.len() - 1)
    }

    /// Trainable parameter leaf; its gradient is picked up by
    /// [`ParamStore::accumulate_grads`].
    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> Var {
        let v = self.leaf(store.value(id).clone(), true);
        self.nodes[v.0].param = Some(id);
        v
    }

    /// Parameter treated as a constant (frozen network).
    pub fn frozen(&mut self, store: &ParamStore<T>, id: ParamId) -> Var {
        self.leaf(store.value(id).clone(), false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    /// Accumulated gradient of a leaf, if any sweep reached it.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.nodes[v.0].grad.as_deref()
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    pub(crate) fn param_grads(&self) -> impl Iterator<Item = (ParamId, &[T])> {
        self.nodes.iter().filter_map(|n| Some((n.param?, n.grad.as_deref()?)))
    }

    pub fn conv2d(&mut self, input: Var, kernel: Var, bias: Var, stride: usize, padding: usize) -> Result<Var> {
        let [n, ci, h, w] = dims4("conv2d", self.value(input).dims())?;
        let [co, kci, kh, kw] = dims4("conv2d", self.value(kernel).dims())?;
        if ci != kci {
            return Err(Error::shape(
                "conv2d",
                format!("input has {ci} channels but kernel expects {kci}"),
            ));
        }
        if self.value(bias).dims() != [co] {
            return Err(Error::shape("conv2d", format!("bias {:?} for {co} output channels", self.value(bias).dims())));
        }
        if stride == 0 || h + 2 * padding < kh || w + 2 * padding < kw {
            return Err(Error::shape(
                "conv2d",
                format!("{h}x{w} input with padding {padding} cannot fit {kh}x{kw} kernel at stride {stride}"),
            ));
        }
        let win = Window { batch: 1, channels: ci, height: h, width: w, kh, kw, stride, padding };
        let (oh, ow) = (win.out_h(), win.out_w());
        let (kr, p, plane) = (win.col_rows(), oh * ow, ci * h * w);
        let (x, k) = (self.value(input).values(), self.value(kernel).values());
        let mut out = vec![T::zero(); n * co * p];
        let mut cols = vec![T::zero(); kr * p];
        for b in 0..n {
            conv::im2col_into(&x[b * plane..][..plane], &win, &mut cols);
            gemm(T::one(), MatRef::new(k, co, kr), MatRef::new(&cols, kr, p), T::zero(), &mut out[b * co * p..][..co * p]);
        }
        add_channel_bias(&mut out, self.value(bias).values(), p);
        let value = Tensor::new(vec![n, co, oh, ow], out)?;
        Ok(self.push(value, Op::Conv2d { input, kernel, bias, stride, padding }, &[input, kernel, bias]))
    }

    pub fn conv_transpose2d(
        &mut self,
        input: Var,
        kernel: Var,
        bias: Var,
        stride: usize,
        padding: usize,
    ) -> Result<Var> {
        let [n, ci, h, w] = dims4("conv_transpose2d", self.value(input).dims())?;
        let [kci, co, kh, kw] = dims4("conv_transpose2d", self.value(kernel).dims())?;
        if ci != kci {
            return Err(Error::shape(
                "conv_transpose2d",
                format!("input has {ci} channels but kernel expects {kci}"),
            ));
        }
        if self.value(bias).dims() != [co] {
            return Err(Error::shape(
                "conv_transpose2d",
                format!("bias {:?} for {co} output channels", self.value(bias).dims()),
            ));
        }
        let oh = ((h - 1) * stride + kh).checked_sub(2 * padding).filter(|&v| v > 0);
        let ow = ((w - 1) * stride + kw).checked_sub(2 * padding).filter(|&v| v > 0);
        let (Some(oh), Some(ow)) = (oh, ow) else {
            return Err(Error::shape("conv_transpose2d", format!("padding {padding} too large for {h}x{w} input")));
        };
        if stride == 0 {
            return Err(Error::shape("conv_transpose2d", "stride must be positive"));
        }
        let win = Window { batch: 1, channels: co, height: oh, width: ow, kh, kw, stride, padding };
        debug_assert_eq!((win.out_h(), win.out_w()), (h, w));
        let (kr, l, plane) = (win.col_rows(), h * w, co * oh * ow);
        let (x, k) = (self.value(input).values(), self.value(kernel).values());
        let mut out = vec![T::zero(); n * plane];
        let mut cols = vec![T::zero(); kr * l];
        for b in 0..n {
            gemm(T::one(), MatRef::new(k, ci, kr).t(), MatRef::new(&x[b * ci * l..][..ci * l], ci, l), T::zero(), &mut cols);
            conv::col2im(&cols, &win, &mut out[b * plane..][..plane]);
        }
        add_channel_bias(&mut out, self.value(bias).values(), oh * ow);
        let value = Tensor::new(vec![n, co, oh, ow], out)?;
        Ok(self.push(value, Op::ConvTranspose2d { input, kernel, bias, stride, padding }, &[input, kernel, bias]))
    }

    pub fn linear(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var> {
        let (xd, wd) = (self.value(input).dims(), self.value(weight).dims());
        let (&[n, din], &[dout, wdin]) = (xd, wd) else {
            return Err(Error::shape("linear", format!("input {xd:?}, weight {wd:?}")));
        };
        if din != wdin {
            return Err(Error::shape("linear", format!("input width {din} but weight expects {wdin}")));
        }
        if self.value(bias).dims() != [dout] {
            return Err(Error::shape("linear", format!("bias {:?} for {dout} outputs", self.value(bias).dims())));
        }
        let mut out = vec![T::zero(); n * dout];
        gemm(
            T::one(),
            MatRef::new(self.value(input).values(), n, din),
            MatRef::new(self.value(weight).values(), dout, din).t(),
            T::zero(),
            &mut out,
        );
        let b = self.value(bias).values();
        for row in out.chunks_exact_mut(dout) {
            row.iter_mut().zip(b).for_each(|(o, &bb)| *o += bb);
        }
        let value = Tensor::new(vec![n, dout], out)?;
        Ok(self.push(value, Op::Linear { input, weight, bias }, &[input, weight, bias]))
    }

    pub fn activation(&mut self, input: Var, kind: Activation) -> Var {
        let x = self.value(input);
        let out: Vec<T> = x.values().iter().map(|&v| kind.apply(v)).collect();
        let value = Tensor::new(x.dims().to_vec(), out).expect("same dims");
        self.push(value, Op::Act { input, kind }, &[input])
    }

    /// Per-channel normalization with statistics of the current batch.
    /// `input` is `[N, C, ...]`; gamma and beta are `[C]`.
    pub fn batch_norm_train(&mut self, input: Var, gamma: Var, beta: Var, eps: f64) -> Result<(Var, BatchStats)> {
        let (n, c, spatial) = self.norm_layout(input, gamma, beta)?;
        let x = self.value(input).values();
        let count = n * spatial;
        let mut mean = vec![0.0; c];
        let mut var = vec![0.0; c];
        for ch in 0..c {
            let (mut s, mut s2) = (0.0f64, 0.0f64);
            for b in 0..n {
                for &v in &x[(b * c + ch) * spatial..][..spatial] {
                    s += v.f64();
                }
            }
            let m = s / count as f64;
            for b in 0..n {
                for &v in &x[(b * c + ch) * spatial..][..spatial] {
                    let d = v.f64() - m;
                    s2 += d * d;
                }
            }
            mean[ch] = m;
            var[ch] = s2 / count as f64;
        }
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let out = self.norm_forward(input, gamma, beta, &mean, &inv_std, n, c, spatial);
        let stats = BatchStats { mean: mean.clone(), var, count };
        let v = self.push(out, Op::Norm { input, gamma, beta, mean, inv_std, batch_stats: true }, &[input, gamma, beta]);
        Ok((v, stats))
    }

    /// Per-channel normalization with fixed (running) statistics.
    pub fn batch_norm_eval(
        &mut self,
        input: Var,
        gamma: Var,
        beta: Var,
        mean: &[f64],
        var: &[f64],
        eps: f64,
    ) -> Result<Var> {
        let (n, c, spatial) = self.norm_layout(input, gamma, beta)?;
        if mean.len() != c || var.len() != c {
            return Err(Error::shape("batch_norm", format!("statistics for {} channels, input has {c}", mean.len())));
        }
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let out = self.norm_forward(input, gamma, beta, mean, &inv_std, n, c, spatial);
        Ok(self.push(
            out,
            Op::Norm { input, gamma, beta, mean: mean.to_vec(), inv_std, batch_stats: false },
            &[input, gamma, beta],
        ))
    }

    fn norm_layout(&self, input: Var, gamma: Var, beta: Var) -> Result<(usize, usize, usize)> {
        let d = self.value(input).dims();
        if d.len() < 2 {
            return Err(Error::shape("batch_norm", format!("input {d:?} has no channel axis")));
        }
        let (n, c) = (d[0], d[1]);
        let spatial: usize = d[2..].iter().product();
        if self.value(gamma).dims() != [c] || self.value(beta).dims() != [c] {
            return Err(Error::shape("batch_norm", format!("affine params must be [{c}]")));
        }
        Ok((n, c, spatial))
    }

    #[allow(clippy::too_many_arguments)]
    fn norm_forward(
        &self,
        input: Var,
        gamma: Var,
        beta: Var,
        mean: &[f64],
        inv_std: &[f64],
        n: usize,
        c: usize,
        spatial: usize,
    ) -> Tensor<T> {
        let x = self.value(input);
        let (g, b) = (self.value(gamma).values(), self.value(beta).values());
        let mut out = vec![T::zero(); x.len()];
        for bi in 0..n {
            for ch in 0..c {
                let scale = g[ch].f64() * inv_std[ch];
                let shift = b[ch].f64() - mean[ch] * scale;
                let (scale, shift) = (T::of(scale), T::of(shift));
                let off = (bi * c + ch) * spatial;
                for (o, &v) in out[off..off + spatial].iter_mut().zip(&x.values()[off..off + spatial]) {
                    *o = v * scale + shift;
                }
            }
        }
        Tensor::new(x.dims().to_vec(), out).expect("same dims")
    }

    pub fn reshape(&mut self, input: Var, dims: &[usize]) -> Result<Var> {
        let value = self.value(input).clone().reshaped(dims)?;
        Ok(self.push(value, Op::Reshape { input }, &[input]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.dims() != y.dims() {
            return Err(Error::shape("add", format!("{:?} vs {:?}", x.dims(), y.dims())));
        }
        let out: Vec<T> = x.values().iter().zip(y.values()).map(|(&p, &q)| p + q).collect();
        let value = Tensor::new(x.dims().to_vec(), out)?;
        Ok(self.push(value, Op::Add { a, b }, &[a, b]))
    }

    /// Stacks `[N, Ca, H, W]` and `[N, Cb, H, W]` along the channel axis.
    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var> {
        let [n, ca, h, w] = dims4("concat_channels", self.value(a).dims())?;
        let [nb, cb, hb, wb] = dims4("concat_channels", self.value(b).dims())?;
        if (n, h, w) != (nb, hb, wb) {
            return Err(Error::shape(
                "concat_channels",
                format!("{:?} vs {:?}", self.value(a).dims(), self.value(b).dims()),
            ));
        }
        let p = h * w;
        let mut out = Vec::with_capacity(n * (ca + cb) * p);
        for bi in 0..n {
            out.extend_from_slice(&self.value(a).values()[bi * ca * p..][..ca * p]);
            out.extend_from_slice(&self.value(b).values()[bi * cb * p..][..cb * p]);
        }
        let value = Tensor::new(vec![n, ca + cb, h, w], out)?;
        Ok(self.push(value, Op::ConcatChannels { a, b }, &[a, b]))
    }

    /// `[N, 1]` → `[N, 1, H, W]`, each sample's scalar filling its plane.
    pub fn broadcast_plane(&mut self, input: Var, h: usize, w: usize) -> Result<Var> {
        let d = self.value(input).dims();
        let &[n, 1] = d else {
            return Err(Error::shape("broadcast_plane", format!("expected [N, 1], got {d:?}")));
        };
        let out: Vec<T> = self.value(input).values().iter().flat_map(|&v| std::iter::repeat(v).take(h * w)).collect();
        let value = Tensor::new(vec![n, 1, h, w], out)?;
        Ok(self.push(value, Op::BroadcastPlane { input }, &[input]))
    }

    pub fn sum(&mut self, input: Var) -> Var {
        let s: f64 = self.value(input).values().iter().map(|v| v.f64()).sum();
        self.push(Tensor::scalar(T::of(s)), Op::Sum { input }, &[input])
    }

    /// Mean squared error against a constant target of the same length.
    pub fn mse(&mut self, input: Var, target: &[T]) -> Result<Var> {
        let x = self.value(input).values();
        if x.len() != target.len() {
            return Err(Error::shape("mse", format!("{} values vs {} targets", x.len(), target.len())));
        }
        let s: f64 = x.iter().zip(target).map(|(&a, &b)| (a.f64() - b.f64()).powi(2)).sum();
        let value = Tensor::scalar(T::of(s / x.len() as f64));
        Ok(self.push(value, Op::Mse { input, target: target.to_vec() }, &[input]))
    }

    /// Batch mean of SSIM between each image of `input` (`[N, 1, H, W]`)
    /// and the matching constant target image.
    pub fn ssim(&mut self, input: Var, target: &[f64], cfg: SsimConfig) -> Result<Var> {
        let [n, c, h, w] = dims4("ssim", self.value(input).dims())?;
        if c != 1 || target.len() != n * h * w {
            return Err(Error::shape("ssim", format!("input {:?}, {} target pixels", self.value(input).dims(), target.len())));
        }
        cfg.validate(h, w)?;
        let x: Vec<f64> = self.value(input).values().iter().map(|v| v.f64()).collect();
        let p = h * w;
        let mut total = 0.0;
        for b in 0..n {
            total += ssim_with_grad(&x[b * p..][..p], &target[b * p..][..p], h, w, &cfg, false).0;
        }
        let value = Tensor::scalar(T::of(total / n as f64));
        Ok(self.push(value, Op::Ssim { input, target: target.to_vec(), cfg }, &[input]))
    }

    /// `Σ coefᵢ · termᵢ + offset` over scalar nodes.
    pub fn affine(&mut self, terms: &[(Var, f64)], offset: f64) -> Result<Var> {
        let mut s = offset;
        for &(v, c) in terms {
            let t = self.value(v);
            if !t.is_scalar() {
                return Err(Error::NonScalarLoss(t.dims().to_vec()));
            }
            s += c * t.values()[0].f64();
        }
        Ok(self.push(Tensor::scalar(T::of(s)), Op::Affine { terms: terms.to_vec() }, &terms.iter().map(|t| t.0).collect::<Vec<_>>()))
    }

    /// Propagates d`loss`/d(node) to every tracked leaf, adding to any
    /// gradient already stored there.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let dims = self.value(loss).dims().to_vec();
        if !self.value(loss).is_scalar() {
            return Err(Error::NonScalarLoss(dims));
        }
        if !self.nodes[loss.0].tracked {
            return Ok(());
        }
        let mut grads: Vec<Option<Vec<T>>> = Vec::with_capacity(loss.0 + 1);
        for node in &mut self.nodes[..=loss.0] {
            grads.push(if matches!(node.op, Op::Leaf) { node.grad.take() } else { None });
        }
        let seed = grads[loss.0].get_or_insert_with(|| vec![T::zero()]);
        seed[0] += T::one();

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.tracked || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
        }

        for (node, g) in self.nodes.iter_mut().zip(grads) {
            if matches!(node.op, Op::Leaf) && node.tracked {
                node.grad = g;
            }
        }
        Ok(())
    }

    fn propagate(&self, i: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let nodes = &self.nodes;
        let tracked = |v: Var| nodes[v.0].tracked;
        let val = |v: Var| &nodes[v.0].value;
        match &nodes[i].op {
            Op::Leaf => {}
            &Op::Conv2d { input, kernel, bias, stride, padding } => {
                let [n, ci, h, w] = dims4("conv2d", val(input).dims()).unwrap();
                let [co, _, kh, kw] = dims4("conv2d", val(kernel).dims()).unwrap();
                let win = Window { batch: 1, channels: ci, height: h, width: w, kh, kw, stride, padding };
                let (kr, p, plane) = (win.col_rows(), win.out_h() * win.out_w(), ci * h * w);
                let (x, k) = (val(input).values(), val(kernel).values());
                if tracked(bias) {
                    let db = slot(grads, nodes, bias);
                    for b in 0..n {
                        for (c, d) in db.iter_mut().enumerate() {
                            *d += sum_f64(&g[(b * co + c) * p..][..p]);
                        }
                    }
                }
                let mut cols = vec![T::zero(); kr * p];
                if tracked(kernel) {
                    let mut dk = vec![T::zero(); co * kr];
                    for b in 0..n {
                        conv::im2col_into(&x[b * plane..][..plane], &win, &mut cols);
                        gemm(T::one(), MatRef::new(&g[b * co * p..][..co * p], co, p), MatRef::new(&cols, kr, p).t(), T::one(), &mut dk);
                    }
                    add_into(slot(grads, nodes, kernel), &dk);
                }
                if tracked(input) {
                    let dx = slot(grads, nodes, input);
                    for b in 0..n {
                        gemm(T::one(), MatRef::new(k, co, kr).t(), MatRef::new(&g[b * co * p..][..co * p], co, p), T::zero(), &mut cols);
                        conv::col2im(&cols, &win, &mut dx[b * plane..][..plane]);
                    }
                }
            }
            &Op::ConvTranspose2d { input, kernel, bias, stride, padding } => {
                let [n, ci, h, w] = dims4("conv_transpose2d", val(input).dims()).unwrap();
                let [_, co, kh, kw] = dims4("conv_transpose2d", val(kernel).dims()).unwrap();
                let [_, _, oh, ow] = dims4("conv_transpose2d", nodes[i].value.dims()).unwrap();
                let win = Window { batch: 1, channels: co, height: oh, width: ow, kh, kw, stride, padding };
                let (kr, l, plane) = (win.col_rows(), h * w, co * oh * ow);
                if tracked(bias) {
                    let db = slot(grads, nodes, bias);
                    let p = oh * ow;
                    for b in 0..n {
                        for (c, d) in db.iter_mut().enumerate() {
                            *d += sum_f64(&g[(b * co + c) * p..][..p]);
                        }
                    }
                }
                if !tracked(kernel) && !tracked(input) {
                    return;
                }
                let (x, k) = (val(input).values(), val(kernel).values());
                let mut gcols = vec![T::zero(); kr * l];
                let mut dk = vec![T::zero(); if tracked(kernel) { ci * kr } else { 0 }];
                let mut dx = vec![T::zero(); if tracked(input) { n * ci * l } else { 0 }];
                for b in 0..n {
                    conv::im2col_into(&g[b * plane..][..plane], &win, &mut gcols);
                    if tracked(kernel) {
                        gemm(T::one(), MatRef::new(&x[b * ci * l..][..ci * l], ci, l), MatRef::new(&gcols, kr, l).t(), T::one(), &mut dk);
                    }
                    if tracked(input) {
                        gemm(T::one(), MatRef::new(k, ci, kr), MatRef::new(&gcols, kr, l), T::zero(), &mut dx[b * ci * l..][..ci * l]);
                    }
                }
                if tracked(kernel) {
                    add_into(slot(grads, nodes, kernel), &dk);
                }
                if tracked(input) {
                    add_into(slot(grads, nodes, input), &dx);
                }
            }
            &Op::Linear { input, weight, bias } => {
                let &[n, din] = val(input).dims() else { unreachable!() };
                let dout = val(weight).dims()[0];
                if tracked(bias) {
                    let db = slot(grads, nodes, bias);
                    for row in g.chunks_exact(dout) {
                        db.iter_mut().zip(row).for_each(|(d, &v)| *d += v);
                    }
                }
                if tracked(weight) {
                    gemm(
                        T::one(),
                        MatRef::new(g, n, dout).t(),
                        MatRef::new(val(input).values(), n, din),
                        T::one(),
                        slot(grads, nodes, weight),
                    );
                }
                if tracked(input) {
                    gemm(
                        T::one(),
                        MatRef::new(g, n, dout),
                        MatRef::new(val(weight).values(), dout, din),
                        T::one(),
                        slot(grads, nodes, input),
                    );
                }
            }
            &Op::Act { input, kind } => {
                let x = val(input).values();
                let y = nodes[i].value.values();
                let dx = slot(grads, nodes, input);
                for k in 0..dx.len() {
                    dx[k] += g[k] * kind.derivative(x[k], y[k]);
                }
            }
            Op::Norm { input, gamma, beta, mean, inv_std, batch_stats } => {
                let (input, gamma, beta) = (*input, *gamma, *beta);
                let d = val(input).dims();
                let (n, c) = (d[0], d[1]);
                let spatial: usize = d[2..].iter().product();
                let x = val(input).values();
                let gam = val(gamma).values();
                let count = (n * spatial) as f64;
                let mut sum_g = vec![0.0; c];
                let mut sum_gx = vec![0.0; c];
                for b in 0..n {
                    for ch in 0..c {
                        let off = (b * c + ch) * spatial;
                        for k in off..off + spatial {
                            let xhat = (x[k].f64() - mean[ch]) * inv_std[ch];
                            sum_g[ch] += g[k].f64();
                            sum_gx[ch] += g[k].f64() * xhat;
                        }
                    }
                }
                if tracked(beta) {
                    let db = slot(grads, nodes, beta);
                    db.iter_mut().zip(&sum_g).for_each(|(d, &s)| *d += T::of(s));
                }
                if tracked(gamma) {
                    let dg = slot(grads, nodes, gamma);
                    dg.iter_mut().zip(&sum_gx).for_each(|(d, &s)| *d += T::of(s));
                }
                if tracked(input) {
                    let dx = slot(grads, nodes, input);
                    for b in 0..n {
                        for ch in 0..c {
                            let off = (b * c + ch) * spatial;
                            let scale = gam[ch].f64() * inv_std[ch];
                            for k in off..off + spatial {
                                let v = if *batch_stats {
                                    let xhat = (x[k].f64() - mean[ch]) * inv_std[ch];
                                    scale * (g[k].f64() - sum_g[ch] / count - xhat * sum_gx[ch] / count)
                                } else {
                                    scale * g[k].f64()
                                };
                                dx[k] += T::of(v);
                            }
                        }
                    }
                }
            }
            &Op::Reshape { input } => add_into(slot(grads, nodes, input), g),
            &Op::Add { a, b } => {
                if tracked(a) {
                    add_into(slot(grads, nodes, a), g);
                }
                if tracked(b) {
                    add_into(slot(grads, nodes, b), g);
                }
            }
            &Op::ConcatChannels { a, b } => {
                let [n, ca, h, w] = dims4("concat", val(a).dims()).unwrap();
                let cb = val(b).dims()[1];
                let p = h * w;
                for (v, c, skip) in [(a, ca, 0), (b, cb, ca)] {
                    if !tracked(v) {
                        continue;
                    }
                    let dst = slot(grads, nodes, v);
                    for bi in 0..n {
                        let src = &g[(bi * (ca + cb) + skip) * p..][..c * p];
                        add_into(&mut dst[bi * c * p..][..c * p], src);
                    }
                }
            }
            &Op::BroadcastPlane { input } => {
                let n = val(input).len();
                let p = g.len() / n;
                let dx = slot(grads, nodes, input);
                for b in 0..n {
                    dx[b] += sum_f64(&g[b * p..][..p]);
                }
            }
            &Op::Sum { input } => {
                let dx = slot(grads, nodes, input);
                dx.iter_mut().for_each(|d| *d += g[0]);
            }
            Op::Mse { input, target } => {
                let x = val(*input).values();
                let scale = 2.0 * g[0].f64() / x.len() as f64;
                let dx = slot(grads, nodes, *input);
                for k in 0..x.len() {
                    dx[k] += T::of(scale * (x[k].f64() - target[k].f64()));
                }
            }
            Op::Ssim { input, target, cfg } => {
                let [n, _, h, w] = dims4("ssim", val(*input).dims()).unwrap();
                let x: Vec<f64> = val(*input).values().iter().map(|v| v.f64()).collect();
                let p = h * w;
                let scale = g[0].f64() / n as f64;
                let dx = slot(grads, nodes, *input);
                for b in 0..n {
                    let (_, gs) = ssim_with_grad(&x[b * p..][..p], &target[b * p..][..p], h, w, cfg, true);
                    for (d, v) in dx[b * p..][..p].iter_mut().zip(gs.expect("requested")) {
                        *d += T::of(scale * v);
                    }
                }
            }
            Op::Affine { terms } => {
                for &(v, c) in terms {
                    if tracked(v) {
                        slot(grads, nodes, v)[0] += T::of(c * g[0].f64());
                    }
                }
            }
        }
    }
}

fn slot<'a, T: Real>(grads: &'a mut [Option<Vec<T>>], nodes: &[Node<T>], v: Var) -> &'a mut [T] {
    grads[v.0].get_or_insert_with(|| vec![T::zero(); nodes[v.0].value.len()])
}

fn add_into<T: Real>(dst: &mut [T], src: &[T]) {
    dst.iter_mut().zip(src).for_each(|(d, &s)| *d += s);
}

fn sum_f64<T: Real>(xs: &[T]) -> T {
    T::of(xs.iter().map(|v| v.f64()).sum())
}

fn add_channel_bias<T: Real>(out: &mut [T], bias: &[T], plane: usize) {
    let c = bias.len();
    for (k, chunk) in out.chunks_exact_mut(plane).enumerate() {
        let b = bias[k % c];
        chunk.iter_mut().for_each(|v| *v += b);
    }
}
