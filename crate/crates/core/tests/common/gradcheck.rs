//! Finite-difference checks of every vector-Jacobian product. Each check
//! returns the worst relative error over its probes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shallow_ntc::entropy::{noisy_rate, Dists};
use shallow_ntc::models::{Arch, Codec, ModelConfig};
use shallow_ntc::nn::*;
use shallow_ntc::trainer::{loss, NoiseDraw};
use shallow_ntc::Tensor;

pub const STEP: f64 = 1e-5;
pub const PROBES: usize = 100;
pub const LAYER_TOL: f64 = 1e-4;
pub const CHAIN_TOL: f64 = 1e-3;

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-7)
}

pub fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// Random values with `|v| >= 0.1`, away from the `|x|` kink.
pub fn away_from_zero(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    random(shape, rng).map(|v| v.signum() * (0.1 + 1.5 * v.abs()))
}

/// Compares `grad` with central differences of `f` at `PROBES` random
/// coordinates of `x`.
fn probe(x: &Tensor, grad: &Tensor, rng: &mut ChaCha8Rng, mut f: impl FnMut(&Tensor) -> f64) -> f64 {
    assert_eq!(x.shape(), grad.shape());
    let mut worst: f64 = 0.0;
    for _ in 0..PROBES {
        let i = rng.gen_range(0..x.len());
        let mut xp = x.clone();
        xp.data_mut()[i] += STEP;
        let mut xm = x.clone();
        xm.data_mut()[i] -= STEP;
        let fd = (f(&xp) - f(&xm)) / (2.0 * STEP);
        worst = worst.max(rel_err(fd, grad.data()[i]));
    }
    worst
}

pub type Check = (String, f64);

pub fn conv_transpose() -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut out = Vec::new();
    for (k, s) in [(3, 2), (4, 4), (5, 2), (6, 4)] {
        let spec = ConvSpec::random(2, 3, k, s, true, 0.5, &mut rng);
        let spec = spec.clone().with_weights(spec.weights.clone(), random(&[3], &mut rng)).unwrap();
        let x = random(&[4, 4, 2], &mut rng);
        let up = random(&[4 * s, 4 * s, 3], &mut rng);
        let g = conv_transpose_vjp(&x, &spec, &up).unwrap();
        let obj = |x: &Tensor, sp: &ConvSpec| conv_transpose_forward(x, sp).unwrap().dot(&up).unwrap();
        let tag = format!("conv_transpose k={k} s={s}");
        out.push((format!("{tag} input"), probe(&x, &g.input, &mut rng, |v| obj(v, &spec))));
        let e = probe(&spec.weights, &g.weights, &mut rng, |w| {
            obj(&x, &spec.clone().with_weights(w.clone(), spec.bias.clone()).unwrap())
        });
        out.push((format!("{tag} weights"), e));
        let e = probe(&spec.bias, &g.bias, &mut rng, |b| {
            obj(&x, &spec.clone().with_weights(spec.weights.clone(), b.clone()).unwrap())
        });
        out.push((format!("{tag} bias"), e));
    }
    out
}

pub fn conv() -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut out = Vec::new();
    for (k, s) in [(1, 1), (3, 2), (5, 2), (6, 4)] {
        let spec = ConvSpec::random(3, 2, k, s, false, 0.5, &mut rng);
        let x = random(&[8, 8, 3], &mut rng);
        let up = random(&[8 / s, 8 / s, 2], &mut rng);
        let g = conv_vjp(&x, &spec, &up).unwrap();
        let obj = |x: &Tensor, sp: &ConvSpec| conv_forward(x, sp).unwrap().dot(&up).unwrap();
        let tag = format!("conv k={k} s={s}");
        out.push((format!("{tag} input"), probe(&x, &g.input, &mut rng, |v| obj(v, &spec))));
        let e = probe(&spec.weights, &g.weights, &mut rng, |w| {
            obj(&x, &spec.clone().with_weights(w.clone(), spec.bias.clone()).unwrap())
        });
        out.push((format!("{tag} weights"), e));
        let e = probe(&spec.bias, &g.bias, &mut rng, |b| {
            obj(&x, &spec.clone().with_weights(spec.weights.clone(), b.clone()).unwrap())
        });
        out.push((format!("{tag} bias"), e));
    }
    out
}

type Forward = fn(&Tensor, &IgdnSpec) -> shallow_ntc::Result<Tensor>;
type Backward = fn(&Tensor, &IgdnSpec, &Tensor) -> shallow_ntc::Result<IgdnGrads>;

pub fn normalization() -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut out = Vec::new();
    let pairs: [(&str, Forward, Backward); 2] = [("igdn", igdn_forward, igdn_vjp), ("gdn", gdn_forward, gdn_vjp)];
    for (name, fwd, vjp) in pairs {
        let c = 4;
        let beta = random(&[c], &mut rng).map(|v| 0.5 + v.abs());
        let gamma = random(&[c, c], &mut rng).map(|v| 0.3 * v.abs());
        let spec = IgdnSpec::from_effective(&beta, &gamma).unwrap();
        let x = away_from_zero(&[3, 3, c], &mut rng);
        let up = random(&[3, 3, c], &mut rng);
        let g = vjp(&x, &spec, &up).unwrap();
        let obj = |x: &Tensor, sp: &IgdnSpec| fwd(x, sp).unwrap().dot(&up).unwrap();
        out.push((format!("{name} input"), probe(&x, &g.input, &mut rng, |v| obj(v, &spec))));
        let e = probe(&beta, &g.beta, &mut rng, |b| obj(&x, &IgdnSpec::from_effective(b, &gamma).unwrap()));
        out.push((format!("{name} beta"), e));
        let e = probe(&gamma, &g.gamma, &mut rng, |gm| obj(&x, &IgdnSpec::from_effective(&beta, gm).unwrap()));
        out.push((format!("{name} gamma"), e));
    }
    out
}

pub fn noisy_rate_grads() -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let shape = [3, 3, 4];
    let z = random(&shape, &mut rng).scale(3.0);
    let u = random(&shape, &mut rng).scale(0.5);
    let mean = random(&shape, &mut rng);
    let scale = random(&shape, &mut rng).map(|v| 0.3 + 2.0 * v.abs());
    let d = Dists::new(mean.clone(), scale.clone()).unwrap();
    let r = noisy_rate(&z, Some(&u), &d).unwrap();
    let bits = |z: &Tensor, m: &Tensor, s: &Tensor| {
        noisy_rate(z, Some(&u), &Dists::new(m.clone(), s.clone()).unwrap()).unwrap().bits
    };
    vec![
        ("rate z".into(), probe(&z, &r.grad_z, &mut rng, |v| bits(v, &mean, &scale))),
        ("rate mean".into(), probe(&mean, &r.grad_mean, &mut rng, |v| bits(&z, v, &scale))),
        ("rate scale".into(), probe(&scale, &r.grad_scale, &mut rng, |v| bits(&z, &mean, v))),
    ]
}

pub fn small_codec(arch: Arch, hyper: Option<usize>, seed: u64) -> Codec {
    let cfg = ModelConfig {
        arch,
        channels: 4,
        filters: 3,
        analysis_kernel: 3,
        hidden: 3,
        hyper_channels: hyper,
        latent_std: 1.0,
        ..ModelConfig::default()
    };
    Codec::random(&cfg, seed).unwrap()
}

/// Gradient of `mse(g(f(x)), target)` with respect to the image.
pub fn analysis_synthesis_chain() -> Vec<Check> {
    let codec = small_codec(Arch::TwoLayer, None, 9);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x = shallow_ntc::data::dead_leaves(16, 16, 9).to_real().into_pixels();
    let target = random(&[16, 16, 3], &mut rng).scale(0.5);
    let f = |x: &Tensor| {
        let z = codec.analysis.forward(x).unwrap();
        codec.synthesis.forward(&z).unwrap().mse(&target).unwrap()
    };
    let (z, at) = codec.analysis.forward_traced(&x).unwrap();
    let (xh, st) = codec.synthesis.forward_traced(&z).unwrap();
    let diff = xh.sub(&target).unwrap();
    let up = diff.scale(2.0 / diff.len() as f64);
    let gz = codec.synthesis.backward(&z, &st, &up, None).unwrap();
    let mut sink = codec.analysis.zeros_like();
    let gx = codec.analysis.backward(&at, &gz, &mut sink).unwrap();
    vec![("analysis-synthesis image".into(), probe(&x, &gx, &mut rng, f))]
}

/// Every layer-level check.
pub fn layer_checks() -> Vec<Check> {
    let mut out = conv_transpose();
    out.extend(conv());
    out.extend(normalization());
    out.extend(noisy_rate_grads());
    out.extend(analysis_synthesis_chain());
    out
}

/// Loss gradient against differences, probes spread over every parameter
/// tensor of the codec.
pub fn full_chain(codec: Codec, size: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = shallow_ntc::data::dead_leaves(size, size, seed).to_real().into_pixels();
    let noise = vec![NoiseDraw::sample(&codec, size, size, &mut rng)];
    let batch = vec![x];
    let out = loss(&codec, &batch, &noise, 0.01).unwrap();
    let grads: Vec<Tensor> = out.grads.named_tensors().into_iter().map(|(_, t)| t.clone()).collect();
    let mut worst: f64 = 0.0;
    for _ in 0..PROBES {
        let ti = rng.gen_range(0..grads.len());
        let i = rng.gen_range(0..grads[ti].len());
        let eval = |delta: f64| {
            let mut c = codec.clone();
            c.named_tensors_mut()[ti].1.data_mut()[i] += delta;
            loss(&c, &batch, &noise, 0.01).unwrap().loss
        };
        let fd = (eval(STEP) - eval(-STEP)) / (2.0 * STEP);
        worst = worst.max(rel_err(fd, grads[ti].data()[i]));
    }
    worst
}

pub fn full_chain_checks() -> Vec<Check> {
    vec![
        ("loss jpeg-like".into(), full_chain(small_codec(Arch::JpegLike, None, 6), 16, 6)),
        ("loss two-layer".into(), full_chain(small_codec(Arch::TwoLayer, None, 7), 16, 7)),
        ("loss hyperprior".into(), full_chain(small_codec(Arch::JpegLike, Some(2), 8), 64, 8)),
    ]
}
