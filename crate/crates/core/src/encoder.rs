//! Encoders of increasing power against a fixed decoder and entropy model:
//! one-shot rounding of `f(x)`, iterative optimisation of continuous latents
//! under uniform noise, and stochastic Gumbel annealing (SGA).
//!
//! Costs are normalised per pixel: `cost = lambda * 255^2 * mse + bpp`, with
//! the MSE taken over pixels and channels in the `[-0.5, 0.5]` convention.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Gumbel;

use crate::bitstream::{Bitstream, Header};
use crate::entropy::{bin_mass, rate_bits, Dists, PMF_FLOOR};
use crate::error::{Error, Result};
use crate::image::{mse255, psnr, Convention, Image};
use crate::models::{Codec, CodingDists, Synthesis};
use crate::optim::{optimizer_step, AdamState};
use crate::rangecoder::{decode_latents, encode_latents};
use crate::tensor::Tensor;

/// Scale applied to the real-convention MSE so `lambda` matches the usual grid.
pub const DISTORTION_SCALE: f64 = 255.0 * 255.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EncodeMode {
    Oneshot,
    Iterative,
    Sga,
}

impl fmt::Display for EncodeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EncodeMode::Oneshot => "oneshot",
            EncodeMode::Iterative => "iterative",
            EncodeMode::Sga => "sga",
        })
    }
}

impl FromStr for EncodeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "oneshot" => Ok(EncodeMode::Oneshot),
            "iterative" => Ok(EncodeMode::Iterative),
            "sga" => Ok(EncodeMode::Sga),
            other => Err(Error::Config(format!("unknown encode mode {other:?}"))),
        }
    }
}

/// `tau(t) = tau_max * exp(-decay * max(0, t - t0))`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TempSchedule {
    pub t0: f64,
    pub decay: f64,
    pub tau_max: f64,
}

impl Default for TempSchedule {
    fn default() -> Self {
        Self {
            t0: 200.0,
            decay: 0.0005,
            tau_max: 0.5,
        }
    }
}

impl TempSchedule {
    pub fn tau(&self, t: usize) -> f64 {
        self.tau_max * (-self.decay * (t as f64 - self.t0).max(0.0)).exp()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncodeConfig {
    pub mode: EncodeMode,
    pub lambda: f64,
    pub steps: usize,
    pub lr: f64,
    pub schedule: TempSchedule,
    pub seed: u64,
}

impl Default for EncodeConfig {
    fn default() -> Self {
        Self {
            mode: EncodeMode::Oneshot,
            lambda: 0.01,
            steps: 3000,
            lr: 5e-3,
            schedule: TempSchedule::default(),
            seed: 0,
        }
    }
}

impl EncodeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be positive, got {}", self.lambda)));
        }
        if !(self.lr > 0.0) || !(self.schedule.tau_max > 0.0 && self.schedule.tau_max <= 0.5) {
            return Err(Error::Config("lr and tau_max must be positive, tau_max <= 0.5".into()));
        }
        Ok(())
    }
}

/// Continuous latents and their rounded counterpart.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentGrid {
    pub z: Tensor,
    pub zhat: Tensor,
}

impl LatentGrid {
    pub fn from_continuous(z: Tensor) -> Self {
        let zhat = z.map(f64::round);
        Self { z, zhat }
    }

    pub fn symbols(&self) -> Vec<i64> {
        self.zhat.data().iter().map(|&v| v as i64).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RdCost {
    /// `lambda * 255^2 * mse + bpp`.
    pub cost: f64,
    /// Mean squared error in the `[-0.5, 0.5]` convention.
    pub mse: f64,
    pub bits: f64,
    pub bpp: f64,
}

impl RdCost {
    pub fn new(lambda: f64, mse: f64, bits: f64, pixels: usize) -> Self {
        let bpp = bits / pixels as f64;
        Self {
            cost: lambda * DISTORTION_SCALE * mse + bpp,
            mse,
            bits,
            bpp,
        }
    }
}

/// Bits of `z` under `dists` with the coder's probability floor; equals
/// `rate_bits` on integer grids.
fn floored_bits(z: &Tensor, dists: &Dists) -> Result<f64> {
    z.ensure_same_shape(&dists.mean)?;
    Ok(z.data()
        .iter()
        .zip(dists.mean.data())
        .zip(dists.scale.data())
        .map(|((&v, &m), &s)| -bin_mass(v - m, s).max(PMF_FLOOR).log2())
        .sum())
}

/// Per-pixel R-D cost of decoding `z` with `model`.
pub fn rd_cost(
    z: &Tensor,
    x: &Image,
    model: &Synthesis,
    dists: &Dists,
    lambda: f64,
) -> Result<RdCost> {
    let target = x.to_real();
    let xhat = model.forward(z)?;
    let mse = xhat.mse(target.pixels())?;
    let bits = floored_bits(z, dists)?;
    Ok(RdCost::new(lambda, mse, bits, x.height() * x.width()))
}

/// `zhat = round(f(x))`, ties away from zero.
pub fn encode_oneshot(x: &Image, codec: &Codec) -> Result<LatentGrid> {
    Ok(LatentGrid::from_continuous(codec.analysis.forward(x.to_real().pixels())?))
}

/// Differentiable relaxed objective at `z~`.
struct Objective<'a> {
    model: &'a Synthesis,
    dists: &'a Dists,
    target: &'a Tensor,
    lambda: f64,
    pixels: f64,
}

impl Objective<'_> {
    /// Cost at `zt` (+ noise for the rate) and its gradient with respect to `zt`.
    fn eval(&self, zt: &Tensor, noise: Option<&Tensor>) -> Result<(f64, Tensor)> {
        let (xhat, trace) = self.model.forward_traced(zt)?;
        let diff = xhat.sub(self.target)?;
        let n = diff.len() as f64;
        let mse = diff.dot(&diff)? / n;
        let k = self.lambda * DISTORTION_SCALE;
        let up = diff.scale(2.0 * k / n);
        let mut grad = self.model.backward(zt, &trace, &up, None)?;
        let rate = crate::entropy::noisy_rate(zt, noise, self.dists)?;
        grad.axpy(1.0 / self.pixels, &rate.grad_z)?;
        Ok((k * mse + rate.bits / self.pixels, grad))
    }
}

/// Tracks the divergence guard: 50 consecutive costs above 10x the first.
struct Guard {
    initial: Option<f64>,
    above: usize,
}

impl Guard {
    fn check(&mut self, step: usize, cost: f64) -> Result<()> {
        if !cost.is_finite() {
            return Err(Error::NonFinite { step });
        }
        let initial = *self.initial.get_or_insert(cost);
        if cost > 10.0 * initial.abs() {
            self.above += 1;
            if self.above >= 50 {
                return Err(Error::Diverged {
                    step,
                    cost,
                    initial,
                });
            }
        } else {
            self.above = 0;
        }
        Ok(())
    }
}

/// SGA relaxation of one element: `z~ = floor(z) + w`, where `w` is the
/// Gumbel-softmax weight of the upper candidate. Returns `(z~, dz~/dz)`.
fn sga_element(z: f64, tau: f64, g_floor: f64, g_ceil: f64) -> (f64, f64) {
    const CLAMP: f64 = 1e-6;
    let lo = z.floor();
    let hi = z.ceil();
    if hi == lo {
        return (z, 0.0);
    }
    let d = z - lo;
    let a = d.clamp(CLAMP, 1.0 - CLAMP);
    let b = (hi - z).clamp(CLAMP, 1.0 - CLAMP);
    let l_lo = -a.atanh() / tau;
    let l_hi = -b.atanh() / tau;
    // weights are softmax((l + g) / tau) over the two candidates
    let t = ((l_hi + g_ceil) - (l_lo + g_floor)) / tau;
    let w = 1.0 / (1.0 + (-t).exp());
    let dl_lo = if d > CLAMP && d < 1.0 - CLAMP { -1.0 / (tau * (1.0 - a * a)) } else { 0.0 };
    let e = hi - z;
    let dl_hi = if e > CLAMP && e < 1.0 - CLAMP { 1.0 / (tau * (1.0 - b * b)) } else { 0.0 };
    let dw = w * (1.0 - w) * (dl_hi - dl_lo) / tau;
    (lo + w * (hi - lo), dw * (hi - lo))
}

/// Optimises latents for a fixed decoder and entropy model. Returns the
/// final grid and the relaxed cost recorded at every step.
///
/// Randomness per step: the iterative mode draws one uniform value per
/// element; SGA draws two Gumbel values per element (lower, upper candidate).
pub fn optimize_latents(
    x: &Image,
    init: &LatentGrid,
    model: &Synthesis,
    dists: &Dists,
    cfg: &EncodeConfig,
) -> Result<(LatentGrid, Vec<f64>)> {
    cfg.validate()?;
    if cfg.steps == 0 || cfg.mode == EncodeMode::Oneshot {
        return Ok((init.clone(), Vec::new()));
    }
    let target = x.to_real().into_pixels();
    let obj = Objective {
        model,
        dists,
        target: &target,
        lambda: cfg.lambda,
        pixels: (x.height() * x.width()) as f64,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let gumbel = Gumbel::new(0.0, 1.0).expect("valid Gumbel");
    let mut z = init.z.clone();
    let mut adam = AdamState::new();
    let mut guard = Guard {
        initial: None,
        above: 0,
    };
    let mut history = Vec::with_capacity(cfg.steps);
    let shape = z.shape().to_vec();
    for step in 0..cfg.steps {
        let (cost, grad) = match cfg.mode {
            EncodeMode::Iterative => {
                let u = Tensor::from_vec(
                    &shape,
                    (0..z.len()).map(|_| rng.gen_range(-0.5..0.5)).collect(),
                )?;
                obj.eval(&z.add(&u)?, None)?
            }
            EncodeMode::Sga => {
                let tau = cfg.schedule.tau(step);
                let mut zt = Vec::with_capacity(z.len());
                let mut dzt = Vec::with_capacity(z.len());
                for &v in z.data() {
                    let g0: f64 = rng.sample(gumbel);
                    let g1: f64 = rng.sample(gumbel);
                    let (t, d) = sga_element(v, tau, g0, g1);
                    zt.push(t);
                    dzt.push(d);
                }
                let zt = Tensor::from_vec(&shape, zt)?;
                let (c, g) = obj.eval(&zt, None)?;
                let chain = Tensor::from_vec(&shape, dzt)?;
                (c, g.zip_with(&chain, |a, b| a * b)?)
            }
            EncodeMode::Oneshot => unreachable!(),
        };
        guard.check(step, cost)?;
        history.push(cost);
        optimizer_step(&mut [&mut z], &[&grad], &mut adam, cfg.lr)?;
    }
    Ok((LatentGrid::from_continuous(z), history))
}

/// Continuous optimisation of `z + u` with fresh uniform noise every step.
pub fn encode_iterative(
    x: &Image,
    init: &LatentGrid,
    model: &Synthesis,
    dists: &Dists,
    cfg: &EncodeConfig,
) -> Result<LatentGrid> {
    let cfg = EncodeConfig {
        mode: EncodeMode::Iterative,
        ..cfg.clone()
    };
    Ok(optimize_latents(x, init, model, dists, &cfg)?.0)
}

/// Stochastic Gumbel annealing towards a rounded grid.
pub fn sga_encode(
    x: &Image,
    init: &LatentGrid,
    model: &Synthesis,
    dists: &Dists,
    cfg: &EncodeConfig,
) -> Result<LatentGrid> {
    let cfg = EncodeConfig {
        mode: EncodeMode::Sga,
        ..cfg.clone()
    };
    Ok(optimize_latents(x, init, model, dists, &cfg)?.0)
}

/// Latents chosen by the configured encoder, with the distributions used to
/// code them. Hyper-latents come from the one-shot grid and stay fixed.
#[derive(Clone, Debug)]
pub struct Encoded {
    pub grid: LatentGrid,
    pub dists: CodingDists,
}

impl Encoded {
    /// Bits of the main and hyper grids under the coded distributions.
    pub fn rate_bits(&self) -> Result<f64> {
        let mut bits = rate_bits(&self.grid.zhat, &self.dists.main.to_coded())?;
        if let Some((hhat, hd)) = &self.dists.hyper {
            bits += rate_bits(hhat, &hd.to_coded())?;
        }
        Ok(bits)
    }
}

/// Runs the configured encoder on an image whose sides are multiples of the
/// codec's block size.
pub fn encode(x: &Image, codec: &Codec, cfg: &EncodeConfig) -> Result<Encoded> {
    let init = encode_oneshot(x, codec)?;
    let dists = codec.coding_dists(&init.zhat)?;
    let coded = dists.main.to_coded();
    let (grid, _) = optimize_latents(x, &init, &codec.synthesis, &coded, cfg)?;
    Ok(Encoded { grid, dists })
}

/// Padding multiple required by the codec.
pub fn block_size(codec: &Codec) -> usize {
    codec.stride() * if codec.entropy.hyper().is_some() { 4 } else { 1 }
}

/// Replicate-pads to the codec's block size.
pub fn pad_image(x: &Image, codec: &Codec) -> Result<Image> {
    let b = block_size(codec);
    let (h, w) = (x.height(), x.width());
    let ph = h.div_ceil(b) * b;
    let pw = w.div_ceil(b) * b;
    if (ph, pw) == (h, w) {
        return Ok(x.clone());
    }
    Image::new(x.pixels().pad_replicate(ph, pw)?, x.convention())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransmitStats {
    /// Payload bits per pixel of the original image.
    pub bpp: f64,
    pub psnr: f64,
    pub cost: f64,
    /// MSE on the 0..255 scale.
    pub mse255: f64,
    /// Model rate of the coded symbols.
    pub model_bits: f64,
    pub payload_bits: usize,
}

/// Encodes, range-codes and packs `x`; statistics come from the decoded image.
pub fn transmit(
    x: &Image,
    cfg: &EncodeConfig,
    codec: &Codec,
    model_hash: u64,
) -> Result<(Bitstream, TransmitStats)> {
    let (h, w) = (x.height(), x.width());
    let padded = pad_image(x, codec)?;
    let enc = encode(&padded, codec, cfg)?;
    let payload_main = encode_latents(&enc.grid.symbols(), &enc.dists.main.coded())?;
    let payload_hyper = match &enc.dists.hyper {
        Some((hhat, hd)) => {
            let syms: Vec<i64> = hhat.data().iter().map(|&v| v as i64).collect();
            Some(encode_latents(&syms, &hd.coded())?)
        }
        None => None,
    };
    let bs = Bitstream {
        header: Header {
            height: h as u32,
            width: w as u32,
            arch: codec.arch().tag(),
            hyper: payload_hyper.is_some(),
            channels: codec.channels() as u16,
            model_hash,
        },
        payload_hyper,
        payload_main,
    };
    let decoded = reconstruct(&enc.grid.zhat, codec, h, w)?;
    let original = x.to_int();
    let m = mse255(&original, &decoded)?;
    let payload_bits = bs.payload_bits();
    let bpp = payload_bits as f64 / (h * w) as f64;
    let stats = TransmitStats {
        bpp,
        psnr: psnr(&original, &decoded)?,
        cost: cfg.lambda * m + bpp,
        mse255: m,
        model_bits: enc.rate_bits()?,
        payload_bits,
    };
    Ok((bs, stats))
}

/// `g(zhat)` cropped to `h x w` in the integer convention.
fn reconstruct(zhat: &Tensor, codec: &Codec, h: usize, w: usize) -> Result<Image> {
    let x = Image::new(codec.synthesis.forward(zhat)?, Convention::Real)?;
    x.to_int().crop(0, 0, h, w)
}

/// Decodes a bitstream produced by [`transmit`] with the same checkpoint.
pub fn decode(bs: &Bitstream, codec: &Codec, model_hash: u64) -> Result<Image> {
    bs.check_hash(model_hash)?;
    let hd = &bs.header;
    if hd.arch != codec.arch().tag()
        || hd.channels as usize != codec.channels()
        || hd.hyper != codec.entropy.hyper().is_some()
    {
        return Err(Error::Bitstream("header does not match the checkpoint".into()));
    }
    let (h, w) = (hd.height as usize, hd.width as usize);
    let b = block_size(codec);
    let s = codec.stride();
    let (lh, lw) = (h.div_ceil(b) * b / s, w.div_ceil(b) * b / s);
    let c = codec.channels();
    let main = match (&codec.entropy.hyper(), &bs.payload_hyper) {
        (Some(hp), Some(payload)) => {
            let prior = hp.prior.dists(lh / 4, lw / 4);
            let syms = decode_latents(payload, &prior.coded())?;
            let hhat = Tensor::from_vec(
                &[lh / 4, lw / 4, hp.hyper_channels()],
                syms.into_iter().map(|v| v as f64).collect(),
            )?;
            codec.dists_from_hyper(&hhat)?.main
        }
        (None, None) => match &codec.entropy {
            crate::models::EntropyModel::Factorized(p) => p.dists(lh, lw),
            crate::models::EntropyModel::Hyper(_) => unreachable!(),
        },
        _ => return Err(Error::Bitstream("hyper payload presence mismatch".into())),
    };
    let syms = decode_latents(&bs.payload_main, &main.coded())?;
    let zhat = Tensor::from_vec(&[lh, lw, c], syms.into_iter().map(|v| v as f64).collect())?;
    reconstruct(&zhat, codec, h, w)
}
