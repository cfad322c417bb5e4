//! Impulse responses of a JPEG-like decoder, tiled into one image.

use shallow_ntc::analysis::{filter_mosaic, impulse_response};
use shallow_ntc::image::save_image;
use shallow_ntc::models::{Codec, ModelConfig};

fn main() {
    let cfg = ModelConfig { channels: 16, kernel: 24, ..ModelConfig::default() };
    let codec = Codec::random(&cfg, 5).unwrap();
    let r = impulse_response(&codec.synthesis, 0, 1.0).unwrap();
    println!("channel 0 response {:?}, peak {:.4}", r.shape(), r.max_abs());
    let img = filter_mosaic(&codec.synthesis, &(0..16).collect::<Vec<_>>(), 4.0).unwrap();
    let path = std::env::temp_dir().join("shallow-ntc-filters.ppm");
    save_image(&img, &path).unwrap();
    println!("wrote {}x{} mosaic to {}", img.height(), img.width(), path.display());
}
