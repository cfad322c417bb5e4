//! One-layer hyperprior: `h = f_h(z)` is a stride-4 `6 x 6` convolution and
//! `g_h` a single stride-4 `6 x 6` transposed convolution producing a mean
//! and a raw scale for every latent element.

use rand::Rng;

use crate::entropy::{scale_from_raw, scale_from_raw_grad, Dists, FactorizedPrior};
use crate::error::{Error, Result};
use crate::nn::{conv_forward, conv_transpose_forward, conv_transpose_vjp, conv_vjp, ConvSpec};
use crate::tensor::Tensor;

use super::params::{accumulate_conv, conv_named, conv_named_mut, NamedMut, NamedRef};

pub const HYPER_KERNEL: usize = 6;
pub const HYPER_STRIDE: usize = 4;

#[derive(Clone, Debug, PartialEq)]
pub struct Hyperprior {
    pub analysis: ConvSpec,
    pub synthesis: ConvSpec,
    /// Factorized prior over the hyper-latents.
    pub prior: FactorizedPrior,
}

/// Result of running the hyper path on (relaxed) latents.
pub struct HyperForward {
    /// Hyper-latents as fed to `g_h` (noisy during training, rounded when coding).
    pub h: Tensor,
    pub dists: Dists,
    /// Raw `g_h` output before the scale transform, `(h, w, 2C)`.
    raw: Tensor,
}

impl Hyperprior {
    pub fn zeros(channels: usize, hyper_channels: usize) -> Self {
        Self {
            analysis: ConvSpec::zeros(channels, hyper_channels, HYPER_KERNEL, HYPER_STRIDE, false),
            synthesis: ConvSpec::zeros(
                hyper_channels,
                2 * channels,
                HYPER_KERNEL,
                HYPER_STRIDE,
                true,
            ),
            prior: FactorizedPrior::new(hyper_channels, 1.0),
        }
    }

    pub fn random<R: Rng>(
        channels: usize,
        hyper_channels: usize,
        latent_std: f64,
        rng: &mut R,
    ) -> Self {
        let k2 = (HYPER_KERNEL * HYPER_KERNEL) as f64;
        let mut m = Self {
            analysis: ConvSpec::random(
                channels,
                hyper_channels,
                HYPER_KERNEL,
                HYPER_STRIDE,
                false,
                1.0 / (k2 * channels as f64).sqrt(),
                rng,
            ),
            synthesis: ConvSpec::random(
                hyper_channels,
                2 * channels,
                HYPER_KERNEL,
                HYPER_STRIDE,
                true,
                0.1 / (hyper_channels as f64).sqrt(),
                rng,
            ),
            prior: FactorizedPrior::new(hyper_channels, 1.0),
        };
        // start from the factorized guess: zero mean, scale about latent_std
        let raw = crate::entropy::raw_from_scale(latent_std);
        for (i, b) in m.synthesis.bias.data_mut().iter_mut().enumerate() {
            *b = if i < channels { 0.0 } else { raw };
        }
        m
    }

    pub fn channels(&self) -> usize {
        self.analysis.in_channels
    }

    pub fn hyper_channels(&self) -> usize {
        self.analysis.out_channels
    }

    /// Means and scales for the main latents given hyper-latents `h`.
    pub fn dists_from(&self, h: &Tensor) -> Result<HyperForward> {
        let raw = conv_transpose_forward(h, &self.synthesis)?;
        let (mean, scale_raw) = raw.split_channels(self.channels())?;
        let scale = scale_raw.map(scale_from_raw);
        Ok(HyperForward {
            h: h.clone(),
            dists: Dists::new(mean, scale)?,
            raw,
        })
    }

    /// `hhat = round(f_h(zhat))` and the resulting per-element distributions.
    pub fn roundtrip(&self, zhat: &Tensor) -> Result<HyperForward> {
        let (h, w, _) = zhat.dims3()?;
        if h % HYPER_STRIDE != 0 || w % HYPER_STRIDE != 0 {
            return Err(Error::Shape(format!(
                "latent grid {h}x{w} is not divisible by the hyper stride"
            )));
        }
        let hhat = conv_forward(zhat, &self.analysis)?.map(f64::round);
        self.dists_from(&hhat)
    }

    /// Training path: `h~ = f_h(z~) + u_h`.
    pub fn forward_noisy(&self, z: &Tensor, noise: &Tensor) -> Result<HyperForward> {
        let h = conv_forward(z, &self.analysis)?.add(noise)?;
        self.dists_from(&h)
    }

    /// Backpropagates gradients of the main-latent distribution parameters and
    /// of the hyper-latents themselves, accumulating into `grads`. Returns the
    /// gradient with respect to the latents fed to `f_h`.
    pub fn backward(
        &self,
        z: &Tensor,
        fwd: &HyperForward,
        grad_mean: &Tensor,
        grad_scale: &Tensor,
        grad_h: &Tensor,
        grads: &mut Hyperprior,
    ) -> Result<Tensor> {
        let (_, raw_scale) = fwd.raw.split_channels(self.channels())?;
        let g_raw_scale = raw_scale.zip_with(grad_scale, |r, g| g * scale_from_raw_grad(r))?;
        let g_raw = Tensor::concat_channels(grad_mean, &g_raw_scale)?;
        let gs = conv_transpose_vjp(&fwd.h, &self.synthesis, &g_raw)?;
        accumulate_conv(&mut grads.synthesis, &gs)?;
        let g_h = gs.input.add(grad_h)?;
        let ga = conv_vjp(z, &self.analysis, &g_h)?;
        accumulate_conv(&mut grads.analysis, &ga)?;
        Ok(ga.input)
    }

    pub fn named_tensors(&self) -> Vec<NamedRef<'_>> {
        let mut v = conv_named("hyper.analysis", &self.analysis);
        v.extend(conv_named("hyper.synthesis", &self.synthesis));
        v.push(("hyper.prior.mean".into(), &self.prior.mean));
        v.push(("hyper.prior.scale_raw".into(), &self.prior.scale_raw));
        v
    }

    pub fn named_tensors_mut(&mut self) -> Vec<NamedMut<'_>> {
        let mut v = conv_named_mut("hyper.analysis", &mut self.analysis);
        v.extend(conv_named_mut("hyper.synthesis", &mut self.synthesis));
        v.push(("hyper.prior.mean".into(), &mut self.prior.mean));
        v.push(("hyper.prior.scale_raw".into(), &mut self.prior.scale_raw));
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entropy::SCALE_MIN;

    #[test]
    fn zero_weights_give_constant_dists() {
        let mut hp = Hyperprior::zeros(3, 2);
        let (bm, bs) = (0.4, -1.5);
        for (i, b) in hp.synthesis.bias.data_mut().iter_mut().enumerate() {
            *b = if i < 3 { bm } else { bs };
        }
        let zhat = Tensor::full(&[8, 4, 3], 2.0);
        let out = hp.roundtrip(&zhat).unwrap();
        assert_eq!(out.dists.shape(), &[8, 4, 3]);
        assert_eq!(out.h.shape(), &[2, 1, 2]);
        assert!(out.dists.mean.data().iter().all(|&m| m == bm));
        let want = scale_from_raw(bs);
        assert!(want > SCALE_MIN);
        assert!(out.dists.scale.data().iter().all(|&s| s == want));
    }

    #[test]
    fn rejects_grids_not_divisible_by_four() {
        let hp = Hyperprior::zeros(3, 2);
        assert!(hp.roundtrip(&Tensor::zeros(&[6, 4, 3])).is_err());
    }
}
