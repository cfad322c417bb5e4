//! Decoder MAC counts per pixel for the JPEG-like and two-layer synthesis
//! transforms, and how the JPEG-like count grows with the kernel size.

use shallow_ntc::models::macs::{jpeg_like, jpeg_like_hyper, mac_count, two_layer, REPORT_SIZE};

fn main() {
    let (h, w) = (REPORT_SIZE, REPORT_SIZE);
    for desc in [jpeg_like(320, 18, 16), two_layer(320, 12, 13, 8, 5, 2), jpeg_like_hyper(320, 18, 16, 320)] {
        let r = mac_count(&desc, h, w);
        println!("{:<18} {:>8.3} KMAC/px", desc.label, r.kmac_per_pixel());
        for (name, k) in r.layer_kmac_per_pixel() {
            println!("    {name:<16} {k:>8.3}");
        }
    }
    println!("\nJPEG-like, C = 320, s = 16");
    for k in [16, 18, 20, 24, 32] {
        println!("  k = {k:>2}: {:.3} KMAC/px", mac_count(&jpeg_like(320, k, 16), h, w).kmac_per_pixel());
    }
}
