//! Trains a small JPEG-like codec on synthetic images and saves a checkpoint.
//!
//! `cargo run --release --example train_codec -- [steps]`

use shallow_ntc::data::dead_leaves;
use shallow_ntc::models::{checkpoint, Arch, Codec, ModelConfig};
use shallow_ntc::trainer::{train_codec, TrainConfig};

fn main() {
    let steps: usize = std::env::args().nth(1).map_or(300, |s| s.parse().expect("steps"));
    let images: Vec<_> = (0..32).map(|i| dead_leaves(96, 96, i)).collect();
    let model = ModelConfig {
        arch: Arch::JpegLike,
        channels: 32,
        kernel: 18,
        analysis_layers: Some(1),
        ..ModelConfig::default()
    };
    let cfg = TrainConfig {
        steps,
        batch_size: 4,
        lr_initial: 1e-3,
        lr_final: 1e-4,
        log_every: (steps / 6).max(1),
        ..TrainConfig::default()
    };
    let out = train_codec(&cfg, &images, Codec::random(&model, 0).unwrap(), None).unwrap();
    for r in &out.log {
        println!("step {:>5}  loss {:.4}  bpp {:.4}  psnr {:.2} dB", r.step, r.loss, r.bpp, -10.0 * r.mse.log10());
    }
    let path = std::env::temp_dir().join("shallow-ntc-example.ckpt");
    let hash = checkpoint::save(&out.codec, &path).unwrap();
    println!("saved {} (hash {hash:016x})", path.display());
}
