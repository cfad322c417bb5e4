//! End-to-end rate-distortion training with the uniform-noise relaxation.
//!
//! Per patch the loss is `lambda * 255^2 * mse(x, g(z + u)) + bits / (H W)`,
//! with `z = f(x)` and the rate taken from the noisy-rate model. With a
//! hyperprior, `h~ = f_h(z + u) + u_h` and its bits under the factorized
//! hyper prior are added.

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::encoder::DISTORTION_SCALE;
use crate::entropy::noisy_rate;
use crate::error::{Error, Result};
use crate::image::{patch_offsets, Image};
use crate::models::{checkpoint, Codec, EntropyModel};
use crate::optim::{optimizer_step, AdamState};
use crate::tensor::Tensor;

/// Which parameters the optimiser updates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Trainable {
    All,
    /// Transforms are frozen; only the entropy model learns.
    EntropyOnly,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub lambda: f64,
    pub batch_size: usize,
    pub patch_size: usize,
    pub steps: usize,
    pub lr_initial: f64,
    pub lr_final: f64,
    /// Fraction of `steps` after which `lr_final` is used.
    pub lr_switch: f64,
    pub seed: u64,
    /// Write an intermediate checkpoint every this many steps.
    pub checkpoint_every: Option<usize>,
    /// Log a CSV row every this many steps (and always at the last step).
    pub log_every: usize,
    pub trainable: Trainable,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda: 0.01,
            batch_size: 8,
            patch_size: 64,
            steps: 1000,
            lr_initial: 1e-4,
            lr_final: 1e-5,
            lr_switch: 0.9,
            seed: 0,
            checkpoint_every: None,
            log_every: 1,
            trainable: Trainable::All,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config("lambda must be a non-negative number".into()));
        }
        if self.batch_size == 0 || self.patch_size == 0 || self.log_every == 0 {
            return Err(Error::Config("batch, patch size and log cadence must be positive".into()));
        }
        if !(self.lr_final < self.lr_initial && self.lr_final > 0.0) {
            return Err(Error::Config("need 0 < lr_final < lr_initial".into()));
        }
        Ok(())
    }

    pub fn lr_at(&self, step: usize) -> f64 {
        if (step as f64) < self.lr_switch * self.steps as f64 {
            self.lr_initial
        } else {
            self.lr_final
        }
    }
}

/// Noise for one patch: `u` on the latents and, with a hyperprior, `u_h`.
#[derive(Clone, Debug)]
pub struct NoiseDraw {
    pub latent: Tensor,
    pub hyper: Option<Tensor>,
}

impl NoiseDraw {
    pub fn sample<R: Rng>(codec: &Codec, height: usize, width: usize, rng: &mut R) -> Self {
        let s = codec.stride();
        let (h, w) = (height / s, width / s);
        let mut uniform = |shape: &[usize]| {
            let n = shape.iter().product();
            Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(-0.5..0.5)).collect())
                .expect("shape")
        };
        let latent = uniform(&[h, w, codec.channels()]);
        let hyper = codec
            .entropy
            .hyper()
            .map(|hp| uniform(&[h / 4, w / 4, hp.hyper_channels()]));
        Self { latent, hyper }
    }

    pub fn zeros(codec: &Codec, height: usize, width: usize) -> Self {
        let s = codec.stride();
        let (h, w) = (height / s, width / s);
        Self {
            latent: Tensor::zeros(&[h, w, codec.channels()]),
            hyper: codec
                .entropy
                .hyper()
                .map(|hp| Tensor::zeros(&[h / 4, w / 4, hp.hyper_channels()])),
        }
    }
}

/// Batch-mean loss and its parts.
#[derive(Clone, Debug)]
pub struct LossOutput {
    pub loss: f64,
    pub bpp: f64,
    /// Real-convention MSE.
    pub mse: f64,
    pub distortion: f64,
    pub grads: Codec,
}

/// Loss of a batch of real-convention patches under fixed noise, with
/// gradients for every parameter.
pub fn loss(
    codec: &Codec,
    batch: &[Tensor],
    noise: &[NoiseDraw],
    lambda: f64,
) -> Result<LossOutput> {
    loss_for(codec, batch, noise, lambda, Trainable::All)
}

/// As [`loss`]; with [`Trainable::EntropyOnly`] the transform gradients are
/// skipped and left at zero.
pub fn loss_for(
    codec: &Codec,
    batch: &[Tensor],
    noise: &[NoiseDraw],
    lambda: f64,
    which: Trainable,
) -> Result<LossOutput> {
    let transforms = which == Trainable::All;
    if batch.is_empty() || batch.len() != noise.len() {
        return Err(Error::InvalidArgument("batch and noise must be non-empty and aligned".into()));
    }
    let mut grads = codec.zeros_like();
    let (mut sum_bpp, mut sum_mse) = (0.0, 0.0);
    let k = lambda * DISTORTION_SCALE;
    let inv_b = 1.0 / batch.len() as f64;
    for (x, nd) in batch.iter().zip(noise) {
        let (hx, wx, _) = x.dims3()?;
        let px = (hx * wx) as f64;
        let (z, atrace) = codec.analysis.forward_traced(x)?;
        let zt = z.add(&nd.latent)?;

        let (xhat, strace) = codec.synthesis.forward_traced(&zt)?;
        let diff = xhat.sub(x)?;
        let n = diff.len() as f64;
        let mse = diff.dot(&diff)? / n;
        let mut gz = if transforms {
            let up = diff.scale(2.0 * k / n * inv_b);
            codec
                .synthesis
                .backward(&zt, &strace, &up, Some(&mut grads.synthesis))?
        } else {
            zt.zeros_like()
        };

        let scale = inv_b / px;
        let bits = match (&codec.entropy, &mut grads.entropy) {
            (EntropyModel::Factorized(p), EntropyModel::Factorized(gp)) => {
                let (h, w, _) = zt.dims3()?;
                let nr = noisy_rate(&zt, None, &p.dists(h, w))?;
                gz.axpy(scale, &nr.grad_z)?;
                let g = p.reduce_grads(&nr.grad_mean, &nr.grad_scale);
                gp.mean.axpy(scale, &g.mean)?;
                gp.scale_raw.axpy(scale, &g.scale_raw)?;
                nr.bits
            }
            (EntropyModel::Hyper(hp), EntropyModel::Hyper(ghp)) => {
                let uh = nd
                    .hyper
                    .as_ref()
                    .ok_or_else(|| Error::InvalidArgument("missing hyper noise".into()))?;
                let fwd = hp.forward_noisy(&zt, uh)?;
                let nr = noisy_rate(&zt, None, &fwd.dists)?;
                let (hh, hw, _) = fwd.h.dims3()?;
                let hr = noisy_rate(&fwd.h, None, &hp.prior.dists(hh, hw))?;
                gz.axpy(scale, &nr.grad_z)?;
                let g = hp.prior.reduce_grads(&hr.grad_mean, &hr.grad_scale);
                ghp.prior.mean.axpy(scale, &g.mean)?;
                ghp.prior.scale_raw.axpy(scale, &g.scale_raw)?;
                let gz_h = hp.backward(
                    &zt,
                    &fwd,
                    &nr.grad_mean.scale(scale),
                    &nr.grad_scale.scale(scale),
                    &hr.grad_z.scale(scale),
                    ghp,
                )?;
                gz.add_assign(&gz_h)?;
                nr.bits + hr.bits
            }
            _ => unreachable!("gradient container mirrors the model"),
        };
        if transforms {
            codec.analysis.backward(&atrace, &gz, &mut grads.analysis)?;
        }
        sum_bpp += bits / px;
        sum_mse += mse;
    }
    let bpp = sum_bpp * inv_b;
    let mse = sum_mse * inv_b;
    Ok(LossOutput {
        loss: k * mse + bpp,
        bpp,
        mse,
        distortion: k * mse,
        grads,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogRow {
    pub step: usize,
    pub loss: f64,
    pub bpp: f64,
    pub mse: f64,
}

pub const LOG_HEADER: &str = "step,loss,bpp,mse";

impl LogRow {
    pub fn csv(&self) -> String {
        format!("{},{:e},{:e},{:e}", self.step, self.loss, self.bpp, self.mse)
    }
}

/// Patches for one step: images drawn in epoch-shuffled order, one random
/// crop each.
struct Sampler<'a> {
    images: &'a [Image],
    order: Vec<usize>,
    pos: usize,
}

impl<'a> Sampler<'a> {
    fn new(images: &'a [Image]) -> Self {
        Self {
            images,
            order: Vec::new(),
            pos: 0,
        }
    }

    fn next(&mut self, size: usize, rng: &mut ChaCha8Rng) -> Result<Tensor> {
        if self.pos == self.order.len() {
            self.order = (0..self.images.len()).collect();
            self.order.shuffle(rng);
            self.pos = 0;
        }
        let img = &self.images[self.order[self.pos]];
        self.pos += 1;
        let seed = rng.gen();
        let (top, left) = patch_offsets(img.height(), img.width(), size, 1, seed)?[0];
        Ok(img.crop(top, left, size, size)?.to_real().into_pixels())
    }
}

/// Result of a training run.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub codec: Codec,
    pub log: Vec<LogRow>,
}

/// Optimises `codec` on `images` in place of a directory; checkpoints go to
/// `out` when given (`{out}` at the end, `{out}.step{n}` at the cadence).
pub fn train_codec(
    cfg: &TrainConfig,
    images: &[Image],
    mut codec: Codec,
    out: Option<&Path>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if images.is_empty() {
        return Err(Error::EmptyDataset(PathBuf::new()));
    }
    if cfg.patch_size % crate::encoder::block_size(&codec) != 0 {
        return Err(Error::Config(format!(
            "patch size {} is not a multiple of the codec block size {}",
            cfg.patch_size,
            crate::encoder::block_size(&codec)
        )));
    }
    if let Some(small) = images
        .iter()
        .find(|i| i.height() < cfg.patch_size || i.width() < cfg.patch_size)
    {
        return Err(Error::Config(format!(
            "image {}x{} is smaller than the patch size {}",
            small.height(),
            small.width(),
            cfg.patch_size
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut sampler = Sampler::new(images);
    let mut adam = AdamState::new();
    let mut log = Vec::new();
    for step in 0..cfg.steps {
        let mut batch = Vec::with_capacity(cfg.batch_size);
        let mut noise = Vec::with_capacity(cfg.batch_size);
        for _ in 0..cfg.batch_size {
            batch.push(sampler.next(cfg.patch_size, &mut rng)?);
            noise.push(NoiseDraw::sample(&codec, cfg.patch_size, cfg.patch_size, &mut rng));
        }
        let res = loss_for(&codec, &batch, &noise, cfg.lambda, cfg.trainable)?;
        if !res.loss.is_finite() {
            return Err(Error::NonFinite { step });
        }
        if step % cfg.log_every == 0 || step + 1 == cfg.steps {
            log.push(LogRow {
                step,
                loss: res.loss,
                bpp: res.bpp,
                mse: res.mse,
            });
        }
        apply(&mut codec, &res.grads, &mut adam, cfg.lr_at(step), cfg.trainable)?;
        if let (Some(every), Some(path)) = (cfg.checkpoint_every, out) {
            if (step + 1) % every == 0 && step + 1 < cfg.steps {
                let mut p = path.as_os_str().to_owned();
                p.push(format!(".step{}", step + 1));
                checkpoint::save(&codec, PathBuf::from(p))?;
            }
        }
    }
    if let Some(path) = out {
        checkpoint::save(&codec, path)?;
    }
    Ok(TrainOutcome { codec, log })
}

fn apply(
    codec: &mut Codec,
    grads: &Codec,
    adam: &mut AdamState,
    lr: f64,
    which: Trainable,
) -> Result<()> {
    let g = match which {
        Trainable::All => grads.named_tensors(),
        Trainable::EntropyOnly => grads.entropy.named_tensors(),
    };
    let grads: Vec<&Tensor> = g.iter().map(|(_, t)| *t).collect();
    let mut params: Vec<&mut Tensor> = match which {
        Trainable::All => codec.named_tensors_mut(),
        Trainable::EntropyOnly => codec.entropy.named_tensors_mut(),
    }
    .into_iter()
    .map(|(_, t)| t)
    .collect();
    optimizer_step(&mut params, &grads, adam, lr)
}

pub fn write_log(path: impl AsRef<Path>, log: &[LogRow]) -> Result<()> {
    let path = path.as_ref();
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut s = String::from(LOG_HEADER);
    s.push('\n');
    for r in log {
        s.push_str(&r.csv());
        s.push('\n');
    }
    f.write_all(s.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Trains on every PPM in `dataset_dir`; writes the checkpoint to `out` and
/// the CSV log next to it (`{out}.csv`).
pub fn train(
    cfg: &TrainConfig,
    dataset_dir: impl AsRef<Path>,
    init: Codec,
    out: impl AsRef<Path>,
) -> Result<(PathBuf, Vec<LogRow>)> {
    let images = crate::data::load_dir(dataset_dir)?;
    let out = out.as_ref();
    let res = train_codec(cfg, &images, init, Some(out))?;
    let mut log_path = out.as_os_str().to_owned();
    log_path.push(".csv");
    write_log(PathBuf::from(log_path), &res.log)?;
    Ok((out.to_path_buf(), res.log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{Arch, ModelConfig};

    fn tiny(arch: Arch, hyper: Option<usize>) -> Codec {
        let cfg = ModelConfig {
            arch,
            channels: 4,
            filters: 4,
            analysis_kernel: 3,
            hyper_channels: hyper,
            ..ModelConfig::default()
        };
        Codec::random(&cfg, 1).unwrap()
    }

    fn patch(seed: u64) -> Tensor {
        crate::data::dead_leaves(16, 16, seed).to_real().into_pixels()
    }

    #[test]
    fn components_add_up_and_scale_with_lambda() {
        let codec = tiny(Arch::TwoLayer, None);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let batch = vec![patch(1), patch(2)];
        let noise: Vec<_> = (0..2).map(|_| NoiseDraw::sample(&codec, 16, 16, &mut rng)).collect();
        let a = loss(&codec, &batch, &noise, 0.01).unwrap();
        let b = loss(&codec, &batch, &noise, 0.02).unwrap();
        assert!((a.loss - (0.01 * DISTORTION_SCALE * a.mse + a.bpp)).abs() < 1e-9);
        assert_eq!(b.distortion, 2.0 * a.distortion);
        let z = loss(&codec, &batch, &noise, 0.0).unwrap();
        assert_eq!(z.loss, z.bpp);
        // without distortion the synthesis receives no gradient
        assert!(z.grads.synthesis.named_tensors().iter().all(|(_, t)| t.max_abs() == 0.0));
    }

    #[test]
    fn lr_switches_at_ninety_percent() {
        let cfg = TrainConfig {
            steps: 100,
            ..TrainConfig::default()
        };
        assert_eq!(cfg.lr_at(89), 1e-4);
        assert_eq!(cfg.lr_at(90), 1e-5);
    }

    #[test]
    fn rerun_is_bit_identical() {
        let images: Vec<Image> = (0..3).map(|s| crate::data::gaussian_blobs(32, 32, s)).collect();
        let cfg = TrainConfig {
            steps: 4,
            batch_size: 2,
            patch_size: 16,
            ..TrainConfig::default()
        };
        let a = train_codec(&cfg, &images, tiny(Arch::JpegLike, None), None).unwrap();
        let b = train_codec(&cfg, &images, tiny(Arch::JpegLike, None), None).unwrap();
        assert_eq!(a.log, b.log);
        assert_eq!(a.codec, b.codec);
    }

    #[test]
    fn entropy_only_keeps_transforms() {
        let images = vec![crate::data::gaussian_blobs(16, 16, 0)];
        let cfg = TrainConfig {
            steps: 3,
            batch_size: 1,
            patch_size: 16,
            trainable: Trainable::EntropyOnly,
            ..TrainConfig::default()
        };
        let init = tiny(Arch::JpegLike, None);
        let out = train_codec(&cfg, &images, init.clone(), None).unwrap();
        assert_eq!(out.codec.synthesis, init.synthesis);
        assert_eq!(out.codec.analysis, init.analysis);
        assert_ne!(out.codec.entropy, init.entropy);
    }

    #[test]
    fn entropy_only_loss_matches_full_loss() {
        for hyper in [None, Some(3)] {
            let codec = tiny(Arch::JpegLike, hyper);
            let mut rng = ChaCha8Rng::seed_from_u64(4);
            let (batch, noise): (Vec<_>, Vec<_>) = (0..2)
                .map(|i| (patch(i), NoiseDraw::sample(&codec, 16, 16, &mut rng)))
                .unzip();
            // hyper needs the latent grid divisible by 4
            let (batch, noise) = if hyper.is_some() {
                let b: Vec<_> = (0..2)
                    .map(|i| crate::data::dead_leaves(64, 64, i).to_real().into_pixels())
                    .collect();
                let n = (0..2).map(|_| NoiseDraw::sample(&codec, 64, 64, &mut rng)).collect();
                (b, n)
            } else {
                (batch, noise)
            };
            let full = loss(&codec, &batch, &noise, 0.01).unwrap();
            let ent = loss_for(&codec, &batch, &noise, 0.01, Trainable::EntropyOnly).unwrap();
            assert_eq!(full.loss, ent.loss);
            assert_eq!(full.grads.entropy, ent.grads.entropy);
            assert!(ent.grads.analysis.named_tensors().iter().all(|(_, t)| t.max_abs() == 0.0));
        }
    }
}
