//! How much a fixed decoder gains from better encoders, image by image.

use shallow_ntc::analysis::{inference_gap_probe, ProbeConfig};
use shallow_ntc::data::dead_leaves;
use shallow_ntc::models::{Arch, Codec, ModelConfig};

fn main() {
    let cfg = ModelConfig { arch: Arch::TwoLayer, channels: 16, analysis_layers: Some(1), ..ModelConfig::default() };
    let codec = Codec::random(&cfg, 0).unwrap();
    let images: Vec<_> = (0..4).map(|i| (format!("img{i}"), dead_leaves(32, 32, 100 + i))).collect();
    let probe = ProbeConfig { steps: 400, ..ProbeConfig::default() };
    let table = inference_gap_probe(&images, &codec, &probe, 2).unwrap();
    print!("{}", table.csv());
    println!(
        "SGA wins on {:.0}%, median gain {:.4} (iterative {:.4})",
        100.0 * table.sga_win_rate(),
        table.median_delta_sga(),
        table.median_delta_iterative()
    );
}
