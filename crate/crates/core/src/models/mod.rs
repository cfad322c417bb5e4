//! Codec architectures: analysis transform, shallow synthesis transforms,
//! entropy models, checkpoints and MAC accounting.

pub mod analysis;
pub mod checkpoint;
pub mod hyper;
pub mod macs;
mod params;
pub mod synthesis;

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::entropy::{Dists, FactorizedPrior};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub use analysis::{analyze, AnalysisTrace, AnalysisTransform};
pub use hyper::{HyperForward, Hyperprior};
pub use params::{NamedMut, NamedRef};
pub use synthesis::{synthesize, JpegLikeSynthesis, Synthesis, SynthesisTrace, TwoLayerSynthesis};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Arch {
    JpegLike,
    TwoLayer,
}

impl Arch {
    pub fn tag(self) -> u8 {
        match self {
            Arch::JpegLike => 0,
            Arch::TwoLayer => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(Arch::JpegLike),
            1 => Ok(Arch::TwoLayer),
            t => Err(Error::Checkpoint(format!("unknown architecture tag {t}"))),
        }
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Arch::JpegLike => "jpeg-like",
            Arch::TwoLayer => "two-layer",
        })
    }
}

impl FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jpeg-like" | "jpeg_like" | "jpeg" => Ok(Arch::JpegLike),
            "two-layer" | "two_layer" => Ok(Arch::TwoLayer),
            other => Err(Error::Config(format!("unknown architecture {other:?}"))),
        }
    }
}

/// Everything needed to build a freshly initialised codec.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub arch: Arch,
    /// Latent channels `C`.
    pub channels: usize,
    /// JPEG-like kernel `k` and stride `s`.
    pub kernel: usize,
    pub stride: usize,
    /// Two-layer hidden width `N` and layer shapes.
    pub hidden: usize,
    pub k1: usize,
    pub s1: usize,
    pub k2: usize,
    pub s2: usize,
    /// Analysis filters `F` and kernel size.
    pub filters: usize,
    pub analysis_kernel: usize,
    /// Analysis depth; `None` uses stride-2 layers.
    pub analysis_layers: Option<usize>,
    /// Hyper-latent channels when the hyperprior is enabled.
    pub hyper_channels: Option<usize>,
    /// Initial latent scale assumed by the synthesis and prior initialisers.
    pub latent_std: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            arch: Arch::JpegLike,
            channels: 192,
            kernel: 18,
            stride: 16,
            hidden: 12,
            k1: 13,
            s1: 8,
            k2: 5,
            s2: 2,
            filters: 64,
            analysis_kernel: 5,
            analysis_layers: None,
            hyper_channels: None,
            latent_std: 4.0,
        }
    }
}

impl ModelConfig {
    pub fn total_stride(&self) -> usize {
        match self.arch {
            Arch::JpegLike => self.stride,
            Arch::TwoLayer => self.s1 * self.s2,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum EntropyModel {
    Factorized(FactorizedPrior),
    Hyper(Hyperprior),
}

impl EntropyModel {
    pub fn hyper(&self) -> Option<&Hyperprior> {
        match self {
            EntropyModel::Hyper(h) => Some(h),
            EntropyModel::Factorized(_) => None,
        }
    }

    pub fn named_tensors(&self) -> Vec<NamedRef<'_>> {
        match self {
            EntropyModel::Factorized(p) => vec![
                ("prior.mean".into(), &p.mean),
                ("prior.scale_raw".into(), &p.scale_raw),
            ],
            EntropyModel::Hyper(h) => h.named_tensors(),
        }
    }

    pub fn named_tensors_mut(&mut self) -> Vec<NamedMut<'_>> {
        match self {
            EntropyModel::Factorized(p) => vec![
                ("prior.mean".into(), &mut p.mean),
                ("prior.scale_raw".into(), &mut p.scale_raw),
            ],
            EntropyModel::Hyper(h) => h.named_tensors_mut(),
        }
    }
}

/// Entropy-coding distributions for one latent grid.
#[derive(Clone, Debug)]
pub struct CodingDists {
    pub main: Dists,
    /// Rounded hyper-latents and their factorized prior.
    pub hyper: Option<(Tensor, Dists)>,
}

/// Analysis transform, synthesis transform and entropy model.
#[derive(Clone, Debug, PartialEq)]
pub struct Codec {
    pub analysis: AnalysisTransform,
    pub synthesis: Synthesis,
    pub entropy: EntropyModel,
}

impl Codec {
    pub fn new(
        analysis: AnalysisTransform,
        synthesis: Synthesis,
        entropy: EntropyModel,
    ) -> Result<Self> {
        let c = synthesis.channels();
        if analysis.channels() != c || analysis.stride() != synthesis.stride() {
            return Err(Error::Shape(format!(
                "analysis produces {} channels at stride {}, synthesis expects {c} at stride {}",
                analysis.channels(),
                analysis.stride(),
                synthesis.stride()
            )));
        }
        let ec = match &entropy {
            EntropyModel::Factorized(p) => p.channels(),
            EntropyModel::Hyper(h) => h.channels(),
        };
        if ec != c {
            return Err(Error::Shape(format!(
                "entropy model covers {ec} channels, latents have {c}"
            )));
        }
        Ok(Self {
            analysis,
            synthesis,
            entropy,
        })
    }

    /// Random initialisation, deterministic in `seed`.
    pub fn random(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = cfg.channels;
        let synthesis = match cfg.arch {
            Arch::JpegLike => {
                // pixel std about 0.25 for latents of std `latent_std`
                let std = 0.25 / (cfg.latent_std * (c as f64).sqrt());
                Synthesis::JpegLike(JpegLikeSynthesis::random(
                    c, cfg.kernel, cfg.stride, std, &mut rng,
                )?)
            }
            Arch::TwoLayer => Synthesis::TwoLayer(TwoLayerSynthesis::random(
                c,
                cfg.hidden,
                cfg.k1,
                cfg.s1,
                cfg.k2,
                cfg.s2,
                cfg.latent_std,
                &mut rng,
            )?),
        };
        let stride = cfg.total_stride();
        if !stride.is_power_of_two() || stride < 2 {
            return Err(Error::Config(format!(
                "total stride {stride} must be a power of two"
            )));
        }
        let analysis = AnalysisTransform::random_layers(
            cfg.filters,
            c,
            cfg.analysis_kernel,
            cfg.analysis_layers.unwrap_or(stride.trailing_zeros() as usize),
            stride,
            cfg.latent_std,
            &mut rng,
        )?;
        let entropy = match cfg.hyper_channels {
            None => EntropyModel::Factorized(FactorizedPrior::new(c, cfg.latent_std)),
            Some(ch) => EntropyModel::Hyper(Hyperprior::random(c, ch, cfg.latent_std, &mut rng)),
        };
        Self::new(analysis, synthesis, entropy)
    }

    pub fn arch(&self) -> Arch {
        match self.synthesis {
            Synthesis::JpegLike(_) => Arch::JpegLike,
            Synthesis::TwoLayer(_) => Arch::TwoLayer,
        }
    }

    pub fn channels(&self) -> usize {
        self.synthesis.channels()
    }

    pub fn stride(&self) -> usize {
        self.synthesis.stride()
    }

    /// `(C, s, k, N, k1, s1, k2, s2)` as stored in checkpoints.
    pub fn hyperparams(&self) -> [usize; 8] {
        match &self.synthesis {
            Synthesis::JpegLike(m) => {
                let l = &m.layer;
                [l.in_channels, l.stride, l.kernel, 0, 0, 0, 0, 0]
            }
            Synthesis::TwoLayer(m) => [
                m.conv_1.in_channels,
                m.conv_1.stride * m.conv_2.stride,
                0,
                m.conv_1.out_channels,
                m.conv_1.kernel,
                m.conv_1.stride,
                m.conv_2.kernel,
                m.conv_2.stride,
            ],
        }
    }

    /// All trainable tensors in checkpoint order.
    pub fn named_tensors(&self) -> Vec<NamedRef<'_>> {
        let mut v = self.analysis.named_tensors();
        v.extend(self.synthesis.named_tensors());
        v.extend(self.entropy.named_tensors());
        v
    }

    pub fn named_tensors_mut(&mut self) -> Vec<NamedMut<'_>> {
        let mut v = self.analysis.named_tensors_mut();
        v.extend(self.synthesis.named_tensors_mut());
        v.extend(self.entropy.named_tensors_mut());
        v
    }

    pub fn zeros_like(&self) -> Codec {
        let mut g = self.clone();
        for (_, t) in g.named_tensors_mut() {
            t.fill(0.0);
        }
        g
    }

    pub fn num_parameters(&self) -> usize {
        self.named_tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// FNV-1a over the serialized parameters.
    pub fn param_hash(&self) -> u64 {
        crate::bitstream::fnv1a64(&checkpoint::to_bytes(self))
    }

    /// Coding distributions for `zhat`; with a hyperprior, `hhat = round(f_h(zhat))`.
    pub fn coding_dists(&self, zhat: &Tensor) -> Result<CodingDists> {
        let (h, w, _) = zhat.dims3()?;
        match &self.entropy {
            EntropyModel::Factorized(p) => Ok(CodingDists {
                main: p.dists(h, w),
                hyper: None,
            }),
            EntropyModel::Hyper(hp) => {
                let fwd = hp.roundtrip(zhat)?;
                let (hh, hw, _) = fwd.h.dims3()?;
                Ok(CodingDists {
                    main: fwd.dists,
                    hyper: Some((fwd.h, hp.prior.dists(hh, hw))),
                })
            }
        }
    }

    /// Coding distributions given already decoded hyper-latents.
    pub fn dists_from_hyper(&self, hhat: &Tensor) -> Result<CodingDists> {
        let hp = self
            .entropy
            .hyper()
            .ok_or_else(|| Error::InvalidArgument("model has no hyperprior".into()))?;
        let (hh, hw, _) = hhat.dims3()?;
        let fwd = hp.dists_from(hhat)?;
        Ok(CodingDists {
            main: fwd.dists,
            hyper: Some((hhat.clone(), hp.prior.dists(hh, hw))),
        })
    }
}

/// `hhat = round(f_h(zhat))` and the per-element `(mu, sigma)` it predicts.
pub fn hyper_roundtrip(model: &Hyperprior, zhat: &Tensor) -> Result<(Tensor, Tensor)> {
    let fwd = model.roundtrip(zhat)?;
    Ok((fwd.dists.mean, fwd.dists.scale))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_codecs_have_consistent_shapes() {
        for arch in [Arch::JpegLike, Arch::TwoLayer] {
            let cfg = ModelConfig {
                arch,
                channels: 8,
                filters: 4,
                hyper_channels: Some(3),
                ..ModelConfig::default()
            };
            let codec = Codec::random(&cfg, 1).unwrap();
            assert_eq!(codec.stride(), 16);
            let z = codec.analysis.forward(&Tensor::zeros(&[64, 64, 3])).unwrap();
            assert_eq!(z.shape(), &[4, 4, 8]);
            let d = codec.coding_dists(&z.map(f64::round)).unwrap();
            assert_eq!(d.main.shape(), &[4, 4, 8]);
            assert_eq!(d.hyper.unwrap().0.shape(), &[1, 1, 3]);
        }
    }

    #[test]
    fn named_orders_agree() {
        let mut codec = Codec::random(&ModelConfig { channels: 4, filters: 4, ..Default::default() }, 0)
            .unwrap();
        let a: Vec<String> = codec.named_tensors().into_iter().map(|(n, _)| n).collect();
        let b: Vec<String> = codec.named_tensors_mut().into_iter().map(|(n, _)| n).collect();
        assert_eq!(a, b);
        let mut uniq = a.clone();
        uniq.sort();
        uniq.dedup();
        assert_eq!(uniq.len(), a.len());
    }

    #[test]
    fn arch_names_roundtrip() {
        for a in [Arch::JpegLike, Arch::TwoLayer] {
            assert_eq!(a.to_string().parse::<Arch>().unwrap(), a);
            assert_eq!(Arch::from_tag(a.tag()).unwrap(), a);
        }
    }
}
