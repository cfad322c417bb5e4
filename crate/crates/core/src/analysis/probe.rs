//! Encoder-to-encoder cost differences on a fixed decoder.
//!
//! The inference gap itself (a KL divergence to the intractable optimal
//! channel) has no estimator; the drop in per-image cost when a stronger
//! encoder replaces one-shot rounding is a lower-bound witness of it.

use crate::encoder::{
    encode, pad_image, EncodeConfig, EncodeMode, Encoded, RdCost, TempSchedule,
};
use crate::error::Result;
use crate::image::Image;
use crate::models::Codec;

use super::{median, par_map};

/// Cost of decoding `enc` for `x`: unclamped real-convention MSE over the
/// original extent plus the coded bits of every grid, per original pixel.
pub fn quantized_cost(x: &Image, codec: &Codec, enc: &Encoded, lambda: f64) -> Result<RdCost> {
    let (h, w) = (x.height(), x.width());
    let xhat = codec.synthesis.forward(&enc.grid.zhat)?.crop(0, 0, h, w)?;
    let mse = xhat.mse(x.to_real().pixels())?;
    Ok(RdCost::new(lambda, mse, enc.rate_bits()?, h * w))
}

/// Encodes `x` (replicate-padded to the block size) and returns its cost.
pub fn encode_cost(x: &Image, codec: &Codec, cfg: &EncodeConfig) -> Result<RdCost> {
    let padded = pad_image(x, codec)?;
    let enc = encode(&padded, codec, cfg)?;
    quantized_cost(x, codec, &enc, cfg.lambda)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeConfig {
    pub lambda: f64,
    pub steps: usize,
    pub lr: f64,
    pub schedule: TempSchedule,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        let e = EncodeConfig::default();
        Self {
            lambda: e.lambda,
            steps: e.steps,
            lr: e.lr,
            schedule: e.schedule,
            seed: e.seed,
        }
    }
}

impl ProbeConfig {
    pub fn encode_config(&self, mode: EncodeMode) -> EncodeConfig {
        EncodeConfig {
            mode,
            lambda: self.lambda,
            steps: self.steps,
            lr: self.lr,
            schedule: self.schedule,
            seed: self.seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeRow {
    pub image: String,
    pub oneshot: RdCost,
    pub iterative: RdCost,
    pub sga: RdCost,
}

impl ProbeRow {
    pub fn delta_sga(&self) -> f64 {
        self.oneshot.cost - self.sga.cost
    }

    pub fn delta_iterative(&self) -> f64 {
        self.oneshot.cost - self.iterative.cost
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeTable {
    pub rows: Vec<ProbeRow>,
}

impl ProbeTable {
    pub fn median_delta_sga(&self) -> f64 {
        median(self.rows.iter().map(ProbeRow::delta_sga).collect())
    }

    pub fn median_delta_iterative(&self) -> f64 {
        median(self.rows.iter().map(ProbeRow::delta_iterative).collect())
    }

    /// Fraction of images where SGA beats one-shot rounding.
    pub fn sga_win_rate(&self) -> f64 {
        if self.rows.is_empty() {
            return 0.0;
        }
        self.rows.iter().filter(|r| r.delta_sga() > 0.0).count() as f64 / self.rows.len() as f64
    }

    pub fn csv(&self) -> String {
        let mut s = String::from("image,cost_oneshot,cost_iter,cost_sga\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{}\n",
                r.image, r.oneshot.cost, r.iterative.cost, r.sga.cost
            ));
        }
        s
    }
}

/// Costs of the three encoders on every image, `jobs` images at a time.
pub fn inference_gap_probe(
    images: &[(String, Image)],
    codec: &Codec,
    cfg: &ProbeConfig,
    jobs: usize,
) -> Result<ProbeTable> {
    let rows = par_map(images, jobs, |(name, x)| {
        Ok(ProbeRow {
            image: name.clone(),
            oneshot: encode_cost(x, codec, &cfg.encode_config(EncodeMode::Oneshot))?,
            iterative: encode_cost(x, codec, &cfg.encode_config(EncodeMode::Iterative))?,
            sga: encode_cost(x, codec, &cfg.encode_config(EncodeMode::Sga))?,
        })
    })?;
    Ok(ProbeTable { rows })
}
