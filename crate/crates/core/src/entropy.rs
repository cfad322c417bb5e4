//! Discretized Gaussian entropy model over integer latents.
//!
//! Every latent element `n` is modelled with a mean `mu` and a scale `sigma`:
//!
//! ```text
//! p(n) = Phi((n + 0.5 - mu) / sigma) - Phi((n - 0.5 - mu) / sigma)
//! ```
//!
//! For coding, `sigma` is rounded *up* to a 64-entry log-spaced table and
//! `mu` is snapped to a 1/256 grid, so that both sides of the channel derive
//! identical integer frequency tables.

use std::collections::HashMap;
use std::f64::consts::{LN_2, SQRT_2};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const SCALE_MIN: f64 = 0.01;
pub const SCALE_MAX: f64 = 256.0;
pub const NUM_SCALES: usize = 64;
/// Smallest probability any coded symbol may receive.
pub const PMF_FLOOR: f64 = 1.0 / 65536.0;
/// Lower bound on bin masses inside the differentiable rate.
pub const LIKELIHOOD_FLOOR: f64 = 1e-9;
/// Total frequency of every coder table.
pub const FREQ_BITS: u32 = 16;
pub const FREQ_TOTAL: u32 = 1 << FREQ_BITS;
/// Largest distance between a coded symbol and the rounded mean.
pub const MAX_RADIUS: i64 = 255;
/// Escaped symbols are sent raw with this many bits.
pub const ESCAPE_BITS: u32 = 32;
/// Resolution of coded means.
pub const MEAN_STEPS: f64 = 256.0;

/// The 64 coded scales, log-spaced from 0.01 to 256 inclusive.
pub fn scale_table() -> &'static [f64; NUM_SCALES] {
    static TABLE: std::sync::OnceLock<[f64; NUM_SCALES]> = std::sync::OnceLock::new();
    TABLE.get_or_init(|| {
        let (lo, hi) = (SCALE_MIN.ln(), SCALE_MAX.ln());
        let mut t = [0.0; NUM_SCALES];
        for (i, v) in t.iter_mut().enumerate() {
            *v = (lo + (hi - lo) * i as f64 / (NUM_SCALES - 1) as f64).exp();
        }
        t[0] = SCALE_MIN;
        t[NUM_SCALES - 1] = SCALE_MAX;
        t
    })
}

/// Index of the smallest table scale that is `>= sigma`; clamps to the ends.
pub fn quantize_scale(sigma: f64) -> usize {
    let table = scale_table();
    table
        .iter()
        .position(|&s| s >= sigma)
        .unwrap_or(NUM_SCALES - 1)
}

/// Standard normal CDF.
pub fn phi_cdf(t: f64) -> f64 {
    0.5 * libm::erfc(-t / SQRT_2)
}

/// Upper tail `1 - Phi(t)`, accurate for large `t`.
fn upper_tail(t: f64) -> f64 {
    0.5 * libm::erfc(t / SQRT_2)
}

fn phi_pdf(t: f64) -> f64 {
    (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Probability mass of the unit bin centred `d` away from the mean.
///
/// Evaluated on the tail closer to zero so that far-out bins keep relative
/// precision; the result is symmetric in `d` by construction.
pub fn bin_mass(d: f64, sigma: f64) -> f64 {
    let d = d.abs();
    let lo = (d - 0.5) / sigma;
    let hi = (d + 0.5) / sigma;
    (upper_tail(lo) - upper_tail(hi)).max(0.0)
}

fn check_scale(sigma: f64) -> Result<()> {
    // tolerance for scales that went through f64 table arithmetic
    if !(sigma >= SCALE_MIN * (1.0 - 1e-12)) {
        return Err(Error::ScaleBelowFloor(sigma));
    }
    Ok(())
}

/// Discretized Gaussian PMF floored at `2^-16`.
pub fn discretized_gaussian_pmf(n: i64, mu: f64, sigma: f64) -> Result<f64> {
    check_scale(sigma)?;
    Ok(bin_mass(n as f64 - mu, sigma).max(PMF_FLOOR))
}

/// Per-element means and scales for a latent tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Dists {
    pub mean: Tensor,
    pub scale: Tensor,
}

impl Dists {
    pub fn new(mean: Tensor, scale: Tensor) -> Result<Self> {
        mean.ensure_same_shape(&scale)?;
        Ok(Self { mean, scale })
    }

    pub fn shape(&self) -> &[usize] {
        self.mean.shape()
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    /// The distributions the coder actually uses.
    pub fn coded(&self) -> Vec<CodedDist> {
        self.mean
            .data()
            .iter()
            .zip(self.scale.data())
            .map(|(&m, &s)| CodedDist::new(m, s))
            .collect()
    }

    /// Replaces every distribution by its coded counterpart.
    pub fn to_coded(&self) -> Dists {
        let coded = self.coded();
        Dists {
            mean: Tensor::from_vec(self.shape(), coded.iter().map(|d| d.mean()).collect())
                .expect("same shape"),
            scale: Tensor::from_vec(self.shape(), coded.iter().map(|d| d.scale()).collect())
                .expect("same shape"),
        }
    }
}

/// `Σ -log2 pmf(zhat_i; mu_i, sigma_i)` with the `2^-16` floor.
pub fn rate_bits(zhat: &Tensor, dists: &Dists) -> Result<f64> {
    zhat.ensure_same_shape(&dists.mean)?;
    let mut bits = 0.0;
    for ((&n, &mu), &sigma) in zhat
        .data()
        .iter()
        .zip(dists.mean.data())
        .zip(dists.scale.data())
    {
        bits -= discretized_gaussian_pmf(n.round() as i64, mu, sigma)?.log2();
    }
    Ok(bits)
}

/// Relaxed rate and its gradients.
#[derive(Clone, Debug)]
pub struct NoisyRate {
    pub bits: f64,
    pub grad_z: Tensor,
    pub grad_mean: Tensor,
    pub grad_scale: Tensor,
}

/// `Σ -log2 [Phi((z+u+0.5-mu)/sigma) - Phi((z+u-0.5-mu)/sigma)]`.
///
/// `noise` is the caller's `u ~ U(-0.5, 0.5)` draw (pass zeros to evaluate at
/// `z` itself). Bin masses are lower-bounded by [`LIKELIHOOD_FLOOR`]; the
/// gradient always flows through the unbounded mass.
pub fn noisy_rate(z: &Tensor, noise: Option<&Tensor>, dists: &Dists) -> Result<NoisyRate> {
    z.ensure_same_shape(&dists.mean)?;
    if let Some(u) = noise {
        z.ensure_same_shape(u)?;
    }
    let n = z.len();
    let mut grad_z = vec![0.0; n];
    let mut grad_mean = vec![0.0; n];
    let mut grad_scale = vec![0.0; n];
    let mut bits = 0.0;
    for i in 0..n {
        let sigma = dists.scale.data()[i];
        check_scale(sigma)?;
        let x = z.data()[i] + noise.map_or(0.0, |u| u.data()[i]);
        let d = x - dists.mean.data()[i];
        let mass = bin_mass(d, sigma);
        let a = (d - 0.5) / sigma;
        let b = (d + 0.5) / sigma;
        let (pa, pb) = (phi_pdf(a), phi_pdf(b));
        let bounded = mass.max(LIKELIHOOD_FLOOR);
        bits -= bounded.log2();
        let dbits_dmass = -1.0 / (bounded * LN_2);
        let dmass_dd = (pb - pa) / sigma;
        grad_z[i] = dbits_dmass * dmass_dd;
        grad_mean[i] = -dbits_dmass * dmass_dd;
        grad_scale[i] = dbits_dmass * -(pb * b - pa * a) / sigma;
    }
    let shape = z.shape();
    Ok(NoisyRate {
        bits,
        grad_z: Tensor::from_vec(shape, grad_z)?,
        grad_mean: Tensor::from_vec(shape, grad_mean)?,
        grad_scale: Tensor::from_vec(shape, grad_scale)?,
    })
}

/// `sigma = 0.01 + softplus(raw)`.
pub fn scale_from_raw(raw: f64) -> f64 {
    SCALE_MIN + softplus(raw)
}

/// `d sigma / d raw`.
pub fn scale_from_raw_grad(raw: f64) -> f64 {
    1.0 / (1.0 + (-raw).exp())
}

pub fn raw_from_scale(sigma: f64) -> f64 {
    let s = (sigma - SCALE_MIN).max(1e-12);
    if s > 30.0 {
        s
    } else {
        s.exp_m1().ln()
    }
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// Per-channel Gaussian shared across spatial positions.
#[derive(Clone, Debug, PartialEq)]
pub struct FactorizedPrior {
    pub mean: Tensor,
    pub scale_raw: Tensor,
}

impl FactorizedPrior {
    pub fn new(channels: usize, scale: f64) -> Self {
        Self {
            mean: Tensor::zeros(&[channels]),
            scale_raw: Tensor::full(&[channels], raw_from_scale(scale)),
        }
    }

    pub fn channels(&self) -> usize {
        self.mean.len()
    }

    pub fn scales(&self) -> Vec<f64> {
        self.scale_raw.data().iter().map(|&r| scale_from_raw(r)).collect()
    }

    /// Broadcasts the per-channel parameters over an `(h, w)` grid.
    pub fn dists(&self, h: usize, w: usize) -> Dists {
        let c = self.channels();
        let scales = self.scales();
        let mut mean = Vec::with_capacity(h * w * c);
        let mut scale = Vec::with_capacity(h * w * c);
        for _ in 0..h * w {
            mean.extend_from_slice(self.mean.data());
            scale.extend_from_slice(&scales);
        }
        Dists {
            mean: Tensor::from_vec(&[h, w, c], mean).expect("shape"),
            scale: Tensor::from_vec(&[h, w, c], scale).expect("shape"),
        }
    }

    /// Reduces element-wise gradients onto the per-channel raw parameters.
    pub fn reduce_grads(&self, grad_mean: &Tensor, grad_scale: &Tensor) -> FactorizedPrior {
        let c = self.channels();
        let mut gm = vec![0.0; c];
        let mut gs = vec![0.0; c];
        for (px_m, px_s) in grad_mean.data().chunks(c).zip(grad_scale.data().chunks(c)) {
            for k in 0..c {
                gm[k] += px_m[k];
                gs[k] += px_s[k];
            }
        }
        for (g, &r) in gs.iter_mut().zip(self.scale_raw.data()) {
            *g *= scale_from_raw_grad(r);
        }
        FactorizedPrior {
            mean: Tensor::from_vec(&[c], gm).expect("shape"),
            scale_raw: Tensor::from_vec(&[c], gs).expect("shape"),
        }
    }
}

/// A distribution as seen by the range coder.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct CodedDist {
    /// Mean in units of `1 / MEAN_STEPS`.
    pub mean_q: i64,
    pub scale_index: u8,
}

impl CodedDist {
    pub fn new(mean: f64, scale: f64) -> Self {
        Self {
            mean_q: (mean * MEAN_STEPS).round() as i64,
            scale_index: quantize_scale(scale) as u8,
        }
    }

    pub fn mean(&self) -> f64 {
        self.mean_q as f64 / MEAN_STEPS
    }

    pub fn scale(&self) -> f64 {
        scale_table()[self.scale_index as usize]
    }

    /// Integer closest to the mean (ties away from zero).
    pub fn center(&self) -> i64 {
        self.mean().round() as i64
    }

    /// Half-width of the explicitly coded alphabet around [`Self::center`].
    pub fn radius(&self) -> i64 {
        ((12.0 * self.scale()).ceil() as i64 + 1).min(MAX_RADIUS)
    }

    pub fn freq_table(&self) -> FreqTable {
        FreqTable::build(self)
    }
}

/// Quantized CDF with `2^16` total frequency over `[low, low + n)` plus a
/// trailing escape symbol.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FreqTable {
    pub low: i64,
    /// Cumulative frequencies, `n + 2` entries starting at 0 and ending at `2^16`.
    pub cdf: Vec<u32>,
}

impl FreqTable {
    fn build(dist: &CodedDist) -> Self {
        let (mu, sigma) = (dist.mean(), dist.scale());
        let r = dist.radius();
        let low = dist.center() - r;
        let n = (2 * r + 1) as usize;
        let mut probs = Vec::with_capacity(n + 1);
        let mut covered = 0.0;
        for v in low..low + n as i64 {
            let m = bin_mass(v as f64 - mu, sigma);
            covered += m;
            probs.push(m.max(PMF_FLOOR));
        }
        probs.push((1.0 - covered).max(PMF_FLOOR));
        let mut freqs: Vec<i64> = probs
            .iter()
            .map(|p| ((p * FREQ_TOTAL as f64).round() as i64).max(1))
            .collect();
        let mut diff = FREQ_TOTAL as i64 - freqs.iter().sum::<i64>();
        // hand the rounding residue to the most probable symbols
        let mut order: Vec<usize> = (0..freqs.len()).collect();
        order.sort_by(|&a, &b| freqs[b].cmp(&freqs[a]).then(a.cmp(&b)));
        while diff != 0 {
            let mut moved = false;
            for &i in &order {
                if diff > 0 {
                    freqs[i] += 1;
                    diff -= 1;
                    moved = true;
                } else if diff < 0 && freqs[i] > 1 {
                    freqs[i] -= 1;
                    diff += 1;
                    moved = true;
                }
                if diff == 0 {
                    break;
                }
            }
            assert!(moved, "alphabet larger than the frequency budget");
        }
        let mut cdf = Vec::with_capacity(freqs.len() + 1);
        let mut acc = 0u32;
        cdf.push(0);
        for f in freqs {
            acc += f as u32;
            cdf.push(acc);
        }
        Self { low, cdf }
    }

    /// Number of symbols including the escape.
    pub fn num_symbols(&self) -> usize {
        self.cdf.len() - 1
    }

    pub fn escape(&self) -> usize {
        self.num_symbols() - 1
    }

    /// Symbol index of a latent value, or the escape symbol.
    pub fn symbol_of(&self, value: i64) -> usize {
        let idx = value - self.low;
        if idx >= 0 && (idx as usize) < self.escape() {
            idx as usize
        } else {
            self.escape()
        }
    }

    pub fn freq(&self, symbol: usize) -> u32 {
        self.cdf[symbol + 1] - self.cdf[symbol]
    }

    /// Ideal codelength of a value in bits, counting escapes at 32 raw bits.
    pub fn cost_bits(&self, value: i64) -> f64 {
        let s = self.symbol_of(value);
        let bits = FREQ_BITS as f64 - (self.freq(s) as f64).log2();
        if s == self.escape() {
            bits + ESCAPE_BITS as f64
        } else {
            bits
        }
    }
}

/// Memoizes frequency tables by coded distribution.
#[derive(Default)]
pub struct FreqCache {
    tables: HashMap<CodedDist, std::rc::Rc<FreqTable>>,
}

impl FreqCache {
    pub fn get(&mut self, dist: &CodedDist) -> std::rc::Rc<FreqTable> {
        self.tables
            .entry(*dist)
            .or_insert_with(|| std::rc::Rc::new(dist.freq_table()))
            .clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_shape() {
        let t = scale_table();
        assert_eq!(t[0], 0.01);
        assert_eq!(t[63], 256.0);
        assert!(t.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn scale_quantization() {
        let t = scale_table();
        assert_eq!(quantize_scale(0.005), 0);
        assert_eq!(quantize_scale(256.0), 63);
        assert_eq!(quantize_scale(1e6), 63);
        assert_eq!(quantize_scale(t[17]), 17);
        assert_eq!(quantize_scale(t[17] * (1.0 + 1e-9)), 18);
        for s in [0.02, 0.5, 1.0, 3.3, 100.0] {
            assert!(t[quantize_scale(s)] >= s);
        }
    }

    #[test]
    fn pmf_reference_value() {
        // ∫_{-1/2}^{1/2} N(0, 1) = erf(1 / (2 sqrt 2)) = 0.3829249225...
        let p = discretized_gaussian_pmf(0, 0.0, 1.0).unwrap();
        assert!((p - 0.382925).abs() < 1e-5);
    }

    #[test]
    fn pmf_symmetry() {
        for (n, mu, s) in [(3, 0.3, 1.7), (-7, 2.25, 0.4), (0, -0.49, 0.05), (40, 1.0, 9.0)] {
            let a = discretized_gaussian_pmf(n, mu, s).unwrap();
            let b = discretized_gaussian_pmf(-n, -mu, s).unwrap();
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn pmf_sums_to_one_before_flooring() {
        for (mu, s) in [(0.0f64, 1.0f64), (0.37, 0.2), (-3.2, 5.5), (10.0, 30.0)] {
            let lo = (mu - 40.0 * s).floor() as i64;
            let hi = (mu + 40.0 * s).ceil() as i64;
            let total: f64 = (lo..=hi).map(|n| bin_mass(n as f64 - mu, s)).sum();
            assert!((total - 1.0).abs() < 1e-9, "mu {mu} s {s}: {total}");
        }
    }

    #[test]
    fn pmf_rejects_small_scale() {
        assert!(matches!(
            discretized_gaussian_pmf(0, 0.0, 0.001),
            Err(Error::ScaleBelowFloor(_))
        ));
    }

    #[test]
    fn rate_of_half_probability_is_one_bit() {
        // a bin of mass 1/2: Phi(b) - Phi(a) = 1/2 with a = -inf-ish
        let z = Tensor::zeros(&[1, 1, 1]);
        let d = Dists::new(
            Tensor::full(&[1, 1, 1], 0.5),
            Tensor::full(&[1, 1, 1], 1e-3 + SCALE_MIN),
        )
        .unwrap();
        assert!((rate_bits(&z, &d).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn floored_elements_cost_at_most_16_bits() {
        let z = Tensor::full(&[1, 1, 1], 50.0);
        let d = Dists::new(Tensor::zeros(&[1, 1, 1]), Tensor::full(&[1, 1, 1], 0.5)).unwrap();
        assert!((rate_bits(&z, &d).unwrap() - 16.0).abs() < 1e-12);
    }

    #[test]
    fn freq_tables_are_valid() {
        for (mu, s) in [(0.0, 0.01), (0.4, 0.3), (-12.6, 4.0), (3.0, 256.0), (0.5, 1.0)] {
            let d = CodedDist::new(mu, s);
            let t = d.freq_table();
            assert_eq!(*t.cdf.last().unwrap(), FREQ_TOTAL);
            assert!(t.cdf.windows(2).all(|w| w[1] > w[0]));
            assert_eq!(t.symbol_of(t.low - 1), t.escape());
            assert_eq!(t.symbol_of(d.center()), (d.center() - t.low) as usize);
        }
    }

    #[test]
    fn scale_reparameterisation_roundtrips() {
        for s in [0.011, 0.5, 2.0, 80.0] {
            assert!((scale_from_raw(raw_from_scale(s)) - s).abs() < 1e-9);
        }
    }
}
