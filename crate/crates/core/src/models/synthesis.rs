//! Shallow synthesis transforms.
//!
//! * JPEG-like: one transposed convolution `C -> 3` with stride `s` and kernel
//!   `k >= s`. Each output block is a linear combination of `C` learned
//!   basis images weighted by the latent coefficients at that position.
//! * Two-layer: `conv_2(igdn(conv_1(z)) + conv_res(z))`, where `conv_1` and
//!   `conv_res` share the `(k1, s1)` configuration and `conv_2` is a small
//!   `(k2, s2)` output layer.

use rand::Rng;

use crate::error::{Error, Result};
use crate::image::{Convention, Image};
use crate::nn::{
    conv_transpose_forward, conv_transpose_input_vjp, conv_transpose_vjp, igdn_forward, igdn_vjp,
    ConvSpec, IgdnSpec,
};
use crate::tensor::Tensor;

use super::params::{accumulate_conv, conv_named, conv_named_mut, NamedMut, NamedRef};

#[derive(Clone, Debug, PartialEq)]
pub struct JpegLikeSynthesis {
    pub layer: ConvSpec,
}

impl JpegLikeSynthesis {
    pub fn zeros(channels: usize, kernel: usize, stride: usize) -> Result<Self> {
        if kernel < stride {
            return Err(Error::InvalidArgument(format!(
                "kernel {kernel} must be at least the stride {stride}"
            )));
        }
        Ok(Self {
            layer: ConvSpec::zeros(channels, 3, kernel, stride, true),
        })
    }

    /// Random basis images on the central `s x s` block; the overlap rim
    /// starts at zero so that models differing only in `k` share their
    /// initial function.
    pub fn random<R: Rng>(
        channels: usize,
        kernel: usize,
        stride: usize,
        std: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let mut m = Self::zeros(channels, kernel, stride)?;
        let centre = ConvSpec::random(channels, 3, stride, stride, true, std, rng);
        let lo = m.layer.offset();
        let per_tap = channels * 3;
        for a in 0..stride {
            for b in 0..stride {
                let src = (a * stride + b) * per_tap;
                let dst = ((a + lo) * kernel + (b + lo)) * per_tap;
                m.layer.weights.data_mut()[dst..dst + per_tap]
                    .copy_from_slice(&centre.weights.data()[src..src + per_tap]);
            }
        }
        Ok(m)
    }

    /// Basis image of channel `c` as a `(k, k, 3)` tensor.
    pub fn kernel_of(&self, c: usize) -> Result<Tensor> {
        let l = &self.layer;
        if c >= l.in_channels {
            return Err(Error::InvalidArgument(format!(
                "channel {c} out of range for {} channels",
                l.in_channels
            )));
        }
        let k = l.kernel;
        let mut out = Tensor::zeros(&[k, k, 3]);
        for a in 0..k {
            for b in 0..k {
                let tap = l.tap(a, b);
                for o in 0..3 {
                    out.set3(a, b, o, tap[c * 3 + o]);
                }
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TwoLayerSynthesis {
    pub conv_1: ConvSpec,
    pub conv_res: ConvSpec,
    pub igdn: IgdnSpec,
    pub conv_2: ConvSpec,
}

impl TwoLayerSynthesis {
    pub fn zeros(c: usize, n: usize, k1: usize, s1: usize, k2: usize, s2: usize) -> Result<Self> {
        if k1 < s1 || k2 < s2 {
            return Err(Error::InvalidArgument(
                "kernels must be at least their strides".into(),
            ));
        }
        Ok(Self {
            conv_1: ConvSpec::zeros(c, n, k1, s1, true),
            conv_res: ConvSpec::zeros(c, n, k1, s1, true),
            igdn: IgdnSpec::from_effective(&Tensor::full(&[n], 1.0), &Tensor::zeros(&[n, n]))?,
            conv_2: ConvSpec::zeros(n, 3, k2, s2, true),
        })
    }

    #[allow(clippy::too_many_arguments)]
    pub fn random<R: Rng>(
        c: usize,
        n: usize,
        k1: usize,
        s1: usize,
        k2: usize,
        s2: usize,
        latent_std: f64,
        rng: &mut R,
    ) -> Result<Self> {
        // hidden units see about (k1/s1)^2 * C latents; aim for unit variance
        let fan1 = ((k1 as f64 / s1 as f64).powi(2) * c as f64).max(1.0);
        let std1 = 1.0 / (fan1.sqrt() * latent_std);
        let fan2 = ((k2 as f64 / s2 as f64).powi(2) * n as f64).max(1.0);
        Ok(Self {
            conv_1: ConvSpec::random(c, n, k1, s1, true, std1, rng),
            conv_res: ConvSpec::random(c, n, k1, s1, true, std1, rng),
            igdn: IgdnSpec::new(n, 0.1),
            conv_2: ConvSpec::random(n, 3, k2, s2, true, 0.2 / fan2.sqrt(), rng),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Synthesis {
    JpegLike(JpegLikeSynthesis),
    TwoLayer(TwoLayerSynthesis),
}

/// Intermediates of a forward pass, reused by the backward pass.
pub enum SynthesisTrace {
    JpegLike,
    TwoLayer { hidden: Tensor, mixed: Tensor },
}

impl Synthesis {
    pub fn channels(&self) -> usize {
        match self {
            Synthesis::JpegLike(m) => m.layer.in_channels,
            Synthesis::TwoLayer(m) => m.conv_1.in_channels,
        }
    }

    /// Total upsampling factor.
    pub fn stride(&self) -> usize {
        match self {
            Synthesis::JpegLike(m) => m.layer.stride,
            Synthesis::TwoLayer(m) => m.conv_1.stride * m.conv_2.stride,
        }
    }

    pub fn arch_tag(&self) -> u8 {
        match self {
            Synthesis::JpegLike(_) => 0,
            Synthesis::TwoLayer(_) => 1,
        }
    }

    fn check(&self, z: &Tensor) -> Result<()> {
        let (_, _, c) = z.dims3()?;
        if c != self.channels() {
            return Err(Error::Shape(format!(
                "synthesis expects {} latent channels, got {c}",
                self.channels()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, z: &Tensor) -> Result<Tensor> {
        Ok(self.forward_traced(z)?.0)
    }

    pub fn forward_traced(&self, z: &Tensor) -> Result<(Tensor, SynthesisTrace)> {
        self.check(z)?;
        match self {
            Synthesis::JpegLike(m) => Ok((
                conv_transpose_forward(z, &m.layer)?,
                SynthesisTrace::JpegLike,
            )),
            Synthesis::TwoLayer(m) => {
                let hidden = conv_transpose_forward(z, &m.conv_1)?;
                let mut mixed = igdn_forward(&hidden, &m.igdn)?;
                mixed.add_assign(&conv_transpose_forward(z, &m.conv_res)?)?;
                let out = conv_transpose_forward(&mixed, &m.conv_2)?;
                Ok((out, SynthesisTrace::TwoLayer { hidden, mixed }))
            }
        }
    }

    /// Backpropagates `upstream` to the latents; parameter gradients are
    /// accumulated into `grads` when given.
    pub fn backward(
        &self,
        z: &Tensor,
        trace: &SynthesisTrace,
        upstream: &Tensor,
        grads: Option<&mut Synthesis>,
    ) -> Result<Tensor> {
        match (self, trace) {
            (Synthesis::JpegLike(m), SynthesisTrace::JpegLike) => match grads {
                Some(Synthesis::JpegLike(g)) => {
                    let cg = conv_transpose_vjp(z, &m.layer, upstream)?;
                    accumulate_conv(&mut g.layer, &cg)?;
                    Ok(cg.input)
                }
                None => conv_transpose_input_vjp(z, &m.layer, upstream),
                Some(_) => Err(Error::InvalidArgument("gradient container mismatch".into())),
            },
            (Synthesis::TwoLayer(m), SynthesisTrace::TwoLayer { hidden, mixed }) => match grads {
                Some(Synthesis::TwoLayer(g)) => {
                    let c2 = conv_transpose_vjp(mixed, &m.conv_2, upstream)?;
                    accumulate_conv(&mut g.conv_2, &c2)?;
                    let ig = igdn_vjp(hidden, &m.igdn, &c2.input)?;
                    let (gb, gg) = m.igdn.raw_grads(&ig);
                    g.igdn.beta_raw.add_assign(&gb)?;
                    g.igdn.gamma_raw.add_assign(&gg)?;
                    let c1 = conv_transpose_vjp(z, &m.conv_1, &ig.input)?;
                    accumulate_conv(&mut g.conv_1, &c1)?;
                    let cr = conv_transpose_vjp(z, &m.conv_res, &c2.input)?;
                    accumulate_conv(&mut g.conv_res, &cr)?;
                    c1.input.add(&cr.input)
                }
                None => {
                    let up_mixed = conv_transpose_input_vjp(mixed, &m.conv_2, upstream)?;
                    let ig = igdn_vjp(hidden, &m.igdn, &up_mixed)?;
                    let g1 = conv_transpose_input_vjp(z, &m.conv_1, &ig.input)?;
                    let gr = conv_transpose_input_vjp(z, &m.conv_res, &up_mixed)?;
                    g1.add(&gr)
                }
                Some(_) => Err(Error::InvalidArgument("gradient container mismatch".into())),
            },
            _ => Err(Error::InvalidArgument("trace does not match model".into())),
        }
    }

    /// Parameter-free vector-Jacobian product with respect to the latents.
    pub fn input_vjp(&self, z: &Tensor, upstream: &Tensor) -> Result<Tensor> {
        let (_, trace) = self.forward_traced(z)?;
        self.backward(z, &trace, upstream, None)
    }

    pub fn zeros_like(&self) -> Synthesis {
        let mut g = self.clone();
        for (_, t) in g.named_tensors_mut() {
            t.fill(0.0);
        }
        g
    }

    pub fn named_tensors(&self) -> Vec<NamedRef<'_>> {
        match self {
            Synthesis::JpegLike(m) => conv_named("synthesis", &m.layer),
            Synthesis::TwoLayer(m) => {
                let mut v = conv_named("synthesis.conv_1", &m.conv_1);
                v.extend(conv_named("synthesis.conv_res", &m.conv_res));
                v.push(("synthesis.igdn.beta_raw".into(), &m.igdn.beta_raw));
                v.push(("synthesis.igdn.gamma_raw".into(), &m.igdn.gamma_raw));
                v.extend(conv_named("synthesis.conv_2", &m.conv_2));
                v
            }
        }
    }

    pub fn named_tensors_mut(&mut self) -> Vec<NamedMut<'_>> {
        match self {
            Synthesis::JpegLike(m) => conv_named_mut("synthesis", &mut m.layer),
            Synthesis::TwoLayer(m) => {
                let mut v = conv_named_mut("synthesis.conv_1", &mut m.conv_1);
                v.extend(conv_named_mut("synthesis.conv_res", &mut m.conv_res));
                v.push(("synthesis.igdn.beta_raw".into(), &mut m.igdn.beta_raw));
                v.push(("synthesis.igdn.gamma_raw".into(), &mut m.igdn.gamma_raw));
                v.extend(conv_named_mut("synthesis.conv_2", &mut m.conv_2));
                v
            }
        }
    }

    /// Whether `g` is affine in the latents.
    pub fn is_affine(&self) -> bool {
        match self {
            Synthesis::JpegLike(_) => true,
            Synthesis::TwoLayer(m) => {
                m.igdn.gamma_raw.max_abs() == 0.0 || m.conv_1.weights.max_abs() == 0.0
            }
        }
    }
}

/// `x_hat = g(zhat)` as an unclamped real-convention image.
pub fn synthesize(model: &Synthesis, zhat: &Tensor) -> Result<Image> {
    Image::new(model.forward(zhat)?, Convention::Real)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_latents(h: usize, w: usize, c: usize, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_vec(
            &[h, w, c],
            (0..h * w * c).map(|_| rng.gen_range(-3.0..3.0)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn zero_latents_give_zero_image() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = Synthesis::JpegLike(JpegLikeSynthesis::random(8, 18, 16, 0.1, &mut rng).unwrap());
        let x = synthesize(&m, &Tensor::zeros(&[2, 3, 8])).unwrap();
        assert_eq!((x.height(), x.width()), (32, 48));
        assert!(x.pixels().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn disjoint_blocks_are_basis_combinations() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let jl = JpegLikeSynthesis::random(5, 4, 4, 1.0, &mut rng).unwrap();
        let z = random_latents(2, 2, 5, 2);
        let x = Synthesis::JpegLike(jl.clone()).forward(&z).unwrap();
        let bases: Vec<Tensor> = (0..5).map(|c| jl.kernel_of(c).unwrap()).collect();
        for bi in 0..2 {
            for bj in 0..2 {
                for a in 0..4 {
                    for b in 0..4 {
                        for o in 0..3 {
                            let want: f64 = (0..5)
                                .map(|c| z.at3(bi, bj, c) * bases[c].at3(a, b, o))
                                .sum();
                            let got = x.at3(bi * 4 + a, bj * 4 + b, o);
                            assert!((got - want).abs() < 1e-12);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn linear_two_layer_is_additive() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut m = TwoLayerSynthesis::random(4, 3, 13, 8, 5, 2, 1.0, &mut rng).unwrap();
        m.igdn = IgdnSpec::from_effective(&Tensor::full(&[3], 1.0), &Tensor::zeros(&[3, 3]))
            .unwrap();
        m.conv_res.weights.fill(0.0);
        let g = Synthesis::TwoLayer(m);
        let (z1, z2) = (random_latents(2, 2, 4, 4), random_latents(2, 2, 4, 5));
        let lhs = g.forward(&z1.add(&z2).unwrap()).unwrap();
        let rhs = g.forward(&z1).unwrap().add(&g.forward(&z2).unwrap()).unwrap();
        assert!(lhs.sub(&rhs).unwrap().max_abs() < 1e-10);
        assert_eq!(lhs.shape(), &[32, 32, 3]);
    }

    #[test]
    fn jpeg_like_is_affine_in_convex_combinations() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut jl = JpegLikeSynthesis::random(6, 18, 16, 0.3, &mut rng).unwrap();
        jl.layer.bias = Tensor::from_vec(&[3], vec![0.1, -0.2, 0.05]).unwrap();
        let g = Synthesis::JpegLike(jl);
        let (z1, z2) = (random_latents(2, 2, 6, 7), random_latents(2, 2, 6, 8));
        let alpha = 0.3;
        let mix = z1.scale(alpha).add(&z2.scale(1.0 - alpha)).unwrap();
        let lhs = g.forward(&mix).unwrap();
        let rhs = g
            .forward(&z1)
            .unwrap()
            .scale(alpha)
            .add(&g.forward(&z2).unwrap().scale(1.0 - alpha))
            .unwrap();
        assert!(lhs.sub(&rhs).unwrap().max_abs() < 1e-10);
    }

    #[test]
    fn channel_mismatch_is_rejected() {
        let g = Synthesis::JpegLike(JpegLikeSynthesis::zeros(4, 16, 16).unwrap());
        assert!(g.forward(&Tensor::zeros(&[1, 1, 5])).is_err());
        assert!(JpegLikeSynthesis::zeros(4, 8, 16).is_err());
    }
}
