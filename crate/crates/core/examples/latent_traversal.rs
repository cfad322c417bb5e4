//! Decodes straight latent paths between two images and measures how far the
//! decoded curve bends away from the chord between its endpoints.

use shallow_ntc::analysis::traverse;
use shallow_ntc::data::dead_leaves;
use shallow_ntc::models::{Arch, Codec, ModelConfig};

fn main() {
    let x0 = dead_leaves(32, 32, 1);
    let x1 = dead_leaves(32, 32, 2);
    for arch in [Arch::JpegLike, Arch::TwoLayer] {
        let cfg = ModelConfig { arch, channels: 24, ..ModelConfig::default() };
        let codec = Codec::random(&cfg, 3).unwrap();
        let r = traverse(&x0, &x1, &codec.analysis, &codec.synthesis, 100).unwrap();
        let worst = r.mse_recon.iter().cloned().fold(0.0, f64::max);
        println!(
            "{arch:?}: length {:.4}, chord {:.4}, eta {:.6}, max mse to the chord {worst:.2e}",
            r.length, r.chord, r.eta
        );
    }
}
