//! Central finite-difference checks against the tape's analytic gradients.

use metafilter_core::encoding::ContrastVector;
use metafilter_core::metrics::SsimConfig;
use metafilter_core::models::{generator_input, GeneratorArch, GeneratorModel, SimulatorArch, SimulatorModel};
use metafilter_core::nn::{init_weights_with_std, Activation, ParamStore, Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const STEP: f64 = 1e-5;
pub const REL_TOL: f64 = 1e-4;
pub const TRIALS: usize = 20;
/// Gradients smaller than this are compared on an absolute scale of
/// `REL_TOL · FLOOR`.
const FLOOR: f64 = 1e-4;
/// Elements probed per input per trial.
const PROBES: usize = 24;

pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(FLOOR)
}

pub struct Outcome {
    pub name: &'static str,
    pub trials: usize,
    pub max_rel: f64,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.trials >= TRIALS && self.max_rel <= REL_TOL
    }
}

fn rand_tensor(rng: &mut ChaCha8Rng, dims: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    let n: usize = dims.iter().product();
    Tensor::new(dims.to_vec(), (0..n).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
}

fn probe_indices(rng: &mut ChaCha8Rng, len: usize) -> Vec<usize> {
    if len <= PROBES {
        (0..len).collect()
    } else {
        (0..PROBES).map(|_| rng.gen_range(0..len)).collect()
    }
}

/// Builds the scalar loss from leaf tensors; returns the largest relative
/// error over probed elements of every input.
fn check_leaves<F>(rng: &mut ChaCha8Rng, inputs: &[Tensor<f64>], build: F) -> f64
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Var,
{
    let eval = |vals: &[Tensor<f64>]| {
        let mut tape = Tape::new();
        let vars: Vec<Var> = vals.iter().map(|t| tape.leaf(t.clone(), false)).collect();
        let loss = build(&mut tape, &vars);
        tape.value(loss).values()[0]
    };
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone(), true)).collect();
    let loss = build(&mut tape, &vars);
    tape.backward(loss).unwrap();
    let mut worst: f64 = 0.0;
    for (i, v) in vars.iter().enumerate() {
        let analytic = tape.grad(*v).map(|g| g.to_vec()).unwrap_or_else(|| vec![0.0; inputs[i].len()]);
        for k in probe_indices(rng, inputs[i].len()) {
            let mut plus = inputs.to_vec();
            plus[i].values_mut()[k] += STEP;
            let mut minus = inputs.to_vec();
            minus[i].values_mut()[k] -= STEP;
            let numeric = (eval(&plus) - eval(&minus)) / (2.0 * STEP);
            worst = nan_max(worst, rel_err(analytic[k], numeric));
        }
    }
    worst
}

fn nan_max(a: f64, b: f64) -> f64 {
    if a.is_nan() || b.is_nan() {
        f64::NAN
    } else {
        a.max(b)
    }
}

fn run<F>(name: &'static str, seed: u64, mut trial: F) -> Outcome
where
    F: FnMut(&mut ChaCha8Rng) -> f64,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // NaN counts as a failure rather than being skipped by `max`.
    let max_rel = (0..TRIALS).map(|_| trial(&mut rng)).fold(0.0, nan_max);
    Outcome { name, trials: TRIALS, max_rel }
}

/// Values bounded away from the leaky-ReLU kink.
fn away_from_zero(rng: &mut ChaCha8Rng, dims: &[usize]) -> Tensor<f64> {
    let mut t = rand_tensor(rng, dims, -2.0, 2.0);
    for v in t.values_mut() {
        if v.abs() < 0.05 {
            *v += 0.1f64.copysign(*v);
        }
    }
    t
}

pub fn conv2d() -> Outcome {
    run("conv2d", 1, |rng| {
        let (n, ci, co) = (rng.gen_range(1..3), rng.gen_range(1..4), rng.gen_range(1..4));
        let (k, stride, pad) = (rng.gen_range(1..4), rng.gen_range(1..3), rng.gen_range(0..2));
        let (h, w) = (rng.gen_range(k.max(3)..7), rng.gen_range(k.max(3)..7));
        let x = rand_tensor(rng, &[n, ci, h, w], -1.0, 1.0);
        let kk = rand_tensor(rng, &[co, ci, k, k], -1.0, 1.0);
        let b = rand_tensor(rng, &[co], -1.0, 1.0);
        let oh = (h + 2 * pad - k) / stride + 1;
        let ow = (w + 2 * pad - k) / stride + 1;
        let target: Vec<f64> = (0..n * co * oh * ow).map(|_| rng.gen_range(-1.0..1.0)).collect();
        check_leaves(rng, &[x, kk, b], |t, v| {
            let y = t.conv2d(v[0], v[1], v[2], stride, pad).unwrap();
            t.mse(y, &target).unwrap()
        })
    })
}

pub fn conv_transpose2d() -> Outcome {
    run("conv_transpose2d", 2, |rng| {
        let (n, ci, co) = (rng.gen_range(1..3), rng.gen_range(1..4), rng.gen_range(1..4));
        let (k, stride) = (rng.gen_range(2..5), rng.gen_range(1..3));
        let pad = rng.gen_range(0..k.min(2));
        let (h, w) = (rng.gen_range(2..5), rng.gen_range(2..5));
        let x = rand_tensor(rng, &[n, ci, h, w], -1.0, 1.0);
        let kk = rand_tensor(rng, &[ci, co, k, k], -1.0, 1.0);
        let b = rand_tensor(rng, &[co], -1.0, 1.0);
        let oh = (h - 1) * stride + k - 2 * pad;
        let ow = (w - 1) * stride + k - 2 * pad;
        let target: Vec<f64> = (0..n * co * oh * ow).map(|_| rng.gen_range(-1.0..1.0)).collect();
        check_leaves(rng, &[x, kk, b], |t, v| {
            let y = t.conv_transpose2d(v[0], v[1], v[2], stride, pad).unwrap();
            t.mse(y, &target).unwrap()
        })
    })
}

pub fn linear() -> Outcome {
    run("linear", 3, |rng| {
        let (n, din, dout) = (rng.gen_range(1..5), rng.gen_range(1..9), rng.gen_range(1..7));
        let x = rand_tensor(rng, &[n, din], -1.0, 1.0);
        let w = rand_tensor(rng, &[dout, din], -1.0, 1.0);
        let b = rand_tensor(rng, &[dout], -1.0, 1.0);
        let target: Vec<f64> = (0..n * dout).map(|_| rng.gen_range(-1.0..1.0)).collect();
        check_leaves(rng, &[x, w, b], |t, v| {
            let y = t.linear(v[0], v[1], v[2]).unwrap();
            t.mse(y, &target).unwrap()
        })
    })
}

pub fn activation(kind: Activation) -> Outcome {
    let name = match kind {
        Activation::LeakyRelu => "leaky_relu",
        Activation::Tanh => "tanh",
        Activation::Sigmoid => "sigmoid",
    };
    run(name, 4 + kind as u64, |rng| {
        let dims = [rng.gen_range(1..4), rng.gen_range(1..9)];
        let x = away_from_zero(rng, &dims);
        let target: Vec<f64> = (0..x.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        check_leaves(rng, &[x], |t, v| {
            let y = t.activation(v[0], kind);
            t.mse(y, &target).unwrap()
        })
    })
}

pub fn batch_norm(train: bool) -> Outcome {
    run(if train { "batch_norm_train" } else { "batch_norm_eval" }, 10 + train as u64, |rng| {
        let (n, c) = (rng.gen_range(2..4), rng.gen_range(1..4));
        let (h, w) = (rng.gen_range(1..4), rng.gen_range(1..4));
        let x = rand_tensor(rng, &[n, c, h, w], -2.0, 2.0);
        let g = rand_tensor(rng, &[c], 0.5, 1.5);
        let b = rand_tensor(rng, &[c], -1.0, 1.0);
        let mean: Vec<f64> = (0..c).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let var: Vec<f64> = (0..c).map(|_| rng.gen_range(0.5..2.0)).collect();
        let target: Vec<f64> = (0..x.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        check_leaves(rng, &[x, g, b], |t, v| {
            let y = if train {
                t.batch_norm_train(v[0], v[1], v[2], 1e-5).unwrap().0
            } else {
                t.batch_norm_eval(v[0], v[1], v[2], &mean, &var, 1e-5).unwrap()
            };
            t.mse(y, &target).unwrap()
        })
    })
}

/// Reshape, add, channel concatenation and period-plane broadcast.
pub fn plumbing() -> Outcome {
    run("reshape_add_concat_broadcast", 12, |rng| {
        let (n, h, w) = (rng.gen_range(1..4), rng.gen_range(1..4), rng.gen_range(1..4));
        let a = rand_tensor(rng, &[n, 1, h, w], -1.0, 1.0);
        let b = rand_tensor(rng, &[n, h * w], -1.0, 1.0);
        let p = rand_tensor(rng, &[n, 1], -1.0, 1.0);
        let target: Vec<f64> = (0..n * 2 * h * w).map(|_| rng.gen_range(-1.0..1.0)).collect();
        check_leaves(rng, &[a, b, p], |t, v| {
            let br = t.reshape(v[1], &[n, 1, h, w]).unwrap();
            let s = t.add(v[0], br).unwrap();
            let plane = t.broadcast_plane(v[2], h, w).unwrap();
            let cat = t.concat_channels(s, plane).unwrap();
            t.mse(cat, &target).unwrap()
        })
    })
}

pub fn ssim() -> Outcome {
    run("ssim", 13, |rng| {
        let window = [3, 5, 7, 11][rng.gen_range(0..4)];
        let (h, w) = (rng.gen_range(window..window + 6), rng.gen_range(window..window + 6));
        let n = rng.gen_range(1..3);
        let x = rand_tensor(rng, &[n, 1, h, w], 0.05, 0.95);
        let y: Vec<f64> = (0..n * h * w).map(|_| if rng.gen_bool(0.5) { 1.0 } else { 0.0 }).collect();
        let cfg = SsimConfig { window, ..SsimConfig::default() };
        check_leaves(rng, &[x], |t, v| t.ssim(v[0], &y, cfg).unwrap())
    })
}

/// conv → leaky ReLU → linear → MSE.
pub fn conv_chain() -> Outcome {
    run("conv_act_linear_mse", 14, |rng| {
        let (n, ci, co) = (rng.gen_range(1..3), rng.gen_range(1..3), rng.gen_range(1..3));
        let x = rand_tensor(rng, &[n, ci, 6, 6], -1.0, 1.0);
        let k = rand_tensor(rng, &[co, ci, 4, 4], -0.5, 0.5);
        let b = rand_tensor(rng, &[co], -0.5, 0.5);
        let w = rand_tensor(rng, &[4, co * 9], -1.0, 1.0);
        let c = rand_tensor(rng, &[4], -1.0, 1.0);
        let target: Vec<f64> = (0..n * 4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        check_leaves(rng, &[x, k, b, w, c], |t, v| {
            let y = t.conv2d(v[0], v[1], v[2], 2, 1).unwrap();
            let y = t.activation(y, Activation::LeakyRelu);
            let y = t.reshape(y, &[n, co * 9]).unwrap();
            let y = t.linear(y, v[3], v[4]).unwrap();
            t.mse(y, &target).unwrap()
        })
    })
}

pub fn tiny_simulator_arch() -> SimulatorArch {
    SimulatorArch { channels: vec![2, 3, 4], hidden: vec![5], hidden_norm: true, image_side: 16, ..SimulatorArch::default() }
}

pub fn tiny_generator_arch() -> GeneratorArch {
    GeneratorArch { noise_dim: 3, seed_side: 4, channels: vec![4, 2, 1], period_hidden: 4, image_side: 16, ..GeneratorArch::default() }
}

/// Gradient of the simulator's output MSE with respect to its input pixels
/// (frozen parameters, running statistics).
pub fn simulator_input_grad() -> Outcome {
    run("simulator_input", 15, |rng| {
        let mut sim = SimulatorModel::<f64>::build(tiny_simulator_arch(), rng.gen()).unwrap();
        init_weights_with_std(sim.store_mut(), rng.gen(), 0.3);
        sim.freeze();
        let x = rand_tensor(rng, &[2, 2, 16, 16], 0.0, 1.0);
        let target: Vec<f64> = (0..2 * 58).map(|_| rng.gen_range(0.0..1.0)).collect();
        check_leaves(rng, &[x], |t, v| {
            let y = sim.forward_eval(t, v[0]).unwrap();
            t.mse(y, &target).unwrap()
        })
    })
}

fn rand_contrast(rng: &mut ChaCha8Rng) -> ContrastVector {
    ContrastVector::new(&(0..14).map(|_| rng.gen_range(0.05..4.0)).collect::<Vec<_>>()).unwrap()
}

/// Composite generator loss through a frozen simulator, differentiated
/// with respect to every generator parameter (training-mode normalization).
pub fn composite_generator_loss() -> Outcome {
    run("generator_loss_composite", 16, |rng| {
        let mut sim = SimulatorModel::<f64>::build(tiny_simulator_arch(), rng.gen()).unwrap();
        init_weights_with_std(sim.store_mut(), rng.gen(), 0.3);
        sim.freeze();
        let mut gen = GeneratorModel::<f64>::build(tiny_generator_arch(), rng.gen()).unwrap();
        init_weights_with_std(gen.store_mut(), rng.gen(), 0.3);
        let n = 3;
        let contrasts: Vec<ContrastVector> = (0..n).map(|_| rand_contrast(rng)).collect();
        let noise: Vec<Vec<f64>> = (0..n).map(|_| (0..3).map(|_| rng.gen::<f64>()).collect()).collect();
        let spectra: Vec<f64> = (0..n * 58).map(|_| rng.gen_range(0.0..1.0)).collect();
        let shapes: Vec<f64> = (0..n * 256).map(|_| if rng.gen_bool(0.4) { 1.0 } else { 0.0 }).collect();
        let periods: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let (alpha, beta) = (rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0));
        let cs: Vec<&ContrastVector> = contrasts.iter().collect();
        let zs: Vec<&[f64]> = noise.iter().map(|z| z.as_slice()).collect();
        let input = generator_input::<f64>(gen.arch(), &cs, &zs).unwrap();

        let loss_of = |gen: &mut GeneratorModel<f64>, tape: &mut Tape<f64>| {
            let x = tape.leaf(input.clone(), false);
            let (img, per) = gen.forward_train(tape, x).unwrap();
            let plane = tape.broadcast_plane(per, 16, 16).unwrap();
            let sim_in = tape.concat_channels(img, plane).unwrap();
            let y = sim.forward_eval(tape, sim_in).unwrap();
            let spec = tape.mse(y, &spectra).unwrap();
            let s = tape.ssim(img, &shapes, SsimConfig::default()).unwrap();
            let p = tape.mse(per, &periods).unwrap();
            tape.affine(&[(spec, 1.0), (s, -alpha), (p, beta)], alpha).unwrap()
        };
        let mut tape = Tape::new();
        let loss = loss_of(&mut gen, &mut tape);
        tape.backward(loss).unwrap();
        gen.store_mut().zero_grad();
        gen.store_mut().accumulate_grads(&tape);
        let snapshot: Vec<(usize, Vec<f64>)> = trainable(gen.store())
            .into_iter()
            .map(|i| (i, param_grad(gen.store(), i)))
            .collect();
        let mut worst: f64 = 0.0;
        for (pi, grad) in snapshot {
            for k in probe_indices(rng, grad.len()).into_iter().take(6) {
                let eval = |delta: f64, gen: &mut GeneratorModel<f64>| {
                    let id = gen.store().iter().nth(pi).unwrap().0;
                    gen.store_mut().value_mut(id).values_mut()[k] += delta;
                    let mut t = Tape::new();
                    let l = loss_of(gen, &mut t);
                    gen.store_mut().value_mut(id).values_mut()[k] -= delta;
                    t.value(l).values()[0]
                };
                let numeric = (eval(STEP, &mut gen) - eval(-STEP, &mut gen)) / (2.0 * STEP);
                worst = nan_max(worst, rel_err(grad[k], numeric));
            }
        }
        worst
    })
}

fn trainable(store: &ParamStore<f64>) -> Vec<usize> {
    store.iter().enumerate().filter(|(_, (_, p))| p.kind.trainable()).map(|(i, _)| i).collect()
}

fn param_grad(store: &ParamStore<f64>, index: usize) -> Vec<f64> {
    let (_, p) = store.iter().nth(index).unwrap();
    p.grad().map(|g| g.to_vec()).unwrap_or_else(|| vec![0.0; p.value.len()])
}

/// Every check, in a fixed order.
pub fn suite() -> Vec<Outcome> {
    vec![
        conv2d(),
        conv_transpose2d(),
        linear(),
        activation(Activation::LeakyRelu),
        activation(Activation::Tanh),
        activation(Activation::Sigmoid),
        batch_norm(true),
        batch_norm(false),
        plumbing(),
        ssim(),
        conv_chain(),
        simulator_input_grad(),
        composite_generator_loss(),
    ]
}
