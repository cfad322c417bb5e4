//! Encodes an image into a `.shbs` container and decodes it again.

use shallow_ntc::bitstream::{fnv1a64, pack, unpack};
use shallow_ntc::data::dead_leaves;
use shallow_ntc::encoder::{decode, transmit, EncodeConfig};
use shallow_ntc::image::psnr;
use shallow_ntc::models::{checkpoint, Arch, Codec, ModelConfig};

fn main() {
    for (name, cfg) in [
        ("jpeg-like", ModelConfig { channels: 32, ..ModelConfig::default() }),
        ("two-layer", ModelConfig { arch: Arch::TwoLayer, channels: 32, ..ModelConfig::default() }),
        ("hyperprior", ModelConfig { channels: 32, hyper_channels: Some(16), ..ModelConfig::default() }),
    ] {
        let codec = Codec::random(&cfg, 1).unwrap();
        let hash = fnv1a64(&checkpoint::to_bytes(&codec));
        // sizes need not be multiples of the block size
        let x = dead_leaves(75, 100, 4);
        let (bs, stats) = transmit(&x, &EncodeConfig::default(), &codec, hash).unwrap();
        let bytes = pack(&bs).unwrap();
        let y = decode(&unpack(&bytes).unwrap(), &codec, hash).unwrap();
        println!(
            "{name:<10} {} bytes, {:.4} bpp (model {:.4}), psnr {:.2} dB, decoded psnr {:.2} dB",
            bytes.len(),
            stats.bpp,
            stats.model_bits / (75.0 * 100.0),
            stats.psnr,
            psnr(&x, &y).unwrap()
        );
    }
}
