//! Frozen block-DCT reference codec.
//!
//! A JPEG-like codec whose `16 x 16` basis images are the orthonormal 2-D
//! DCT-II, applied to each colour plane separately (768 channels). The
//! analysis is the exact adjoint divided by a step `delta`, so one-shot
//! rounding is uniform scalar quantization of the coefficients. Only the
//! factorized prior is learned.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::encoder::{encode_oneshot, EncodeConfig, RdCost};
use crate::entropy::{rate_bits, raw_from_scale, FactorizedPrior};
use crate::error::{Error, Result};
use crate::image::{patch_offsets, Image};
use crate::models::{AnalysisTransform, Codec, EntropyModel, JpegLikeSynthesis, Synthesis};
use crate::nn::ConvSpec;
use crate::tensor::Tensor;
use crate::trainer::{train_codec, LogRow, TrainConfig, Trainable};

use super::probe::encode_cost;

pub const BLOCK: usize = 16;
pub const DCT_CHANNELS: usize = 3 * BLOCK * BLOCK;

/// Orthonormal DCT-II basis; entry `[(u * n + v) * n * n + a * n + b]` is
/// basis image `(u, v)` at pixel `(a, b)`.
pub fn dct_basis(n: usize) -> Vec<f64> {
    let c = |u: usize, a: usize| {
        let norm = if u == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
        norm * (std::f64::consts::PI * (2 * a + 1) as f64 * u as f64 / (2 * n) as f64).cos()
    };
    let mut out = vec![0.0; n * n * n * n];
    for u in 0..n {
        for v in 0..n {
            for a in 0..n {
                for b in 0..n {
                    out[(u * n + v) * n * n + a * n + b] = c(u, a) * c(v, b);
                }
            }
        }
    }
    out
}

/// Channel `plane * 256 + u * 16 + v` holds basis `(u, v)` of colour `plane`.
pub fn dct_codec(delta: f64) -> Result<Codec> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::InvalidArgument(format!("step {delta} must be positive")));
    }
    let n = BLOCK;
    let basis = dct_basis(n);
    let mut ana = Tensor::zeros(&[n, n, 3, DCT_CHANNELS]);
    let mut syn = Tensor::zeros(&[n, n, DCT_CHANNELS, 3]);
    for plane in 0..3 {
        for uv in 0..n * n {
            let ch = plane * n * n + uv;
            for ab in 0..n * n {
                let b = basis[uv * n * n + ab];
                ana.data_mut()[(ab * 3 + plane) * DCT_CHANNELS + ch] = b / delta;
                syn.data_mut()[(ab * DCT_CHANNELS + ch) * 3 + plane] = b * delta;
            }
        }
    }
    let analysis = AnalysisTransform::new(
        vec![ConvSpec::zeros(3, DCT_CHANNELS, n, n, false).with_weights(ana, Tensor::zeros(&[DCT_CHANNELS]))?],
        vec![],
    )?;
    let mut synthesis = JpegLikeSynthesis::zeros(DCT_CHANNELS, n, n)?;
    synthesis.layer.weights = syn;
    Codec::new(
        analysis,
        Synthesis::JpegLike(synthesis),
        EntropyModel::Factorized(FactorizedPrior::new(DCT_CHANNELS, 1.0)),
    )
}

/// Random `size x size` crops, `per_image` from every image.
fn sample_patches(images: &[Image], size: usize, per_image: usize, seed: u64) -> Result<Vec<Image>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for img in images {
        for (t, l) in patch_offsets(img.height(), img.width(), size, per_image, rng.gen())? {
            out.push(img.crop(t, l, size, size)?);
        }
    }
    Ok(out)
}

/// Sets the prior to the per-channel mean and spread of the rounded
/// coefficients of `patches`.
pub fn moment_match(codec: &mut Codec, patches: &[Image]) -> Result<()> {
    let c = codec.channels();
    let mut sum = vec![0.0; c];
    let mut sq = vec![0.0; c];
    let mut count = 0usize;
    for p in patches {
        let g = encode_oneshot(p, codec)?;
        for px in g.zhat.data().chunks(c) {
            for k in 0..c {
                sum[k] += px[k];
                sq[k] += px[k] * px[k];
            }
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::InvalidArgument("no patches to fit the prior on".into()));
    }
    let EntropyModel::Factorized(prior) = &mut codec.entropy else {
        return Err(Error::InvalidArgument("moment matching needs a factorized prior".into()));
    };
    let n = count as f64;
    for k in 0..c {
        let mean = sum[k] / n;
        let var = (sq[k] / n - mean * mean).max(0.0);
        prior.mean.data_mut()[k] = mean;
        prior.scale_raw.data_mut()[k] = raw_from_scale(var.sqrt().max(0.1));
    }
    Ok(())
}

fn oneshot(lambda: f64) -> EncodeConfig {
    EncodeConfig {
        lambda,
        ..EncodeConfig::default()
    }
}

/// Mean one-shot cost over `patches` with the coded distributions.
pub fn mean_oneshot_cost(codec: &Codec, patches: &[Image], lambda: f64) -> Result<f64> {
    let mut total = 0.0;
    for p in patches {
        total += encode_cost(p, codec, &oneshot(lambda))?.cost;
    }
    Ok(total / patches.len() as f64)
}

#[derive(Clone, Debug)]
pub struct DctBaseline {
    pub codec: Codec,
    /// The moment-matched codec before prior training.
    pub matched: Codec,
    pub delta: f64,
    /// `(delta, mean one-shot cost)` for every searched step.
    pub search: Vec<(f64, f64)>,
    pub log: Vec<LogRow>,
}

/// Picks the step with the lowest one-shot cost on training crops
/// (moment-matched prior), then trains only the prior with `cfg`.
pub fn fit_dct_baseline(images: &[Image], cfg: &TrainConfig, deltas: &[f64]) -> Result<DctBaseline> {
    if deltas.is_empty() {
        return Err(Error::InvalidArgument("no quantizer steps to search".into()));
    }
    let patches = sample_patches(images, cfg.patch_size, 1, cfg.seed ^ 0xd1c7)?;
    let mut search = Vec::with_capacity(deltas.len());
    let mut best: Option<(f64, Codec)> = None;
    for &d in deltas {
        let mut codec = dct_codec(d)?;
        moment_match(&mut codec, &patches)?;
        let cost = mean_oneshot_cost(&codec, &patches, cfg.lambda)?;
        search.push((d, cost));
        if best.as_ref().map_or(true, |(c, _)| cost < *c) {
            best = Some((cost, codec));
        }
    }
    let (_, codec) = best.expect("non-empty search");
    let delta = search
        .iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|p| p.0)
        .expect("non-empty search");
    let cfg = TrainConfig {
        trainable: Trainable::EntropyOnly,
        ..cfg.clone()
    };
    let out = train_codec(&cfg, images, codec.clone(), None)?;
    Ok(DctBaseline {
        codec: out.codec,
        matched: codec,
        delta,
        search,
        log: out.log,
    })
}

/// Cost of the DCT codec on `x` with one-shot rounding.
pub fn dct_baseline_cost(x: &Image, baseline: &DctBaseline, lambda: f64) -> Result<RdCost> {
    encode_cost(x, &baseline.codec, &oneshot(lambda))
}

/// Bits of `zhat` under the baseline's prior, for inspection.
pub fn baseline_bits(baseline: &DctBaseline, zhat: &Tensor) -> Result<f64> {
    let (h, w, _) = zhat.dims3()?;
    let dists = baseline.codec.coding_dists(zhat)?.main;
    debug_assert_eq!(dists.shape(), [h, w, DCT_CHANNELS]);
    rate_bits(zhat, &dists.to_coded())
}
