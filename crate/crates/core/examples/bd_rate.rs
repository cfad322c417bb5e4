//! Bjontegaard rate difference between two rate-distortion curves.

use shallow_ntc::analysis::{bd_rate, fit_log_rate, RdCurve, RdPoint};

fn curve(label: &str, pts: &[(f64, f64)]) -> RdCurve {
    RdCurve::new(label, pts.iter().map(|&(bpp, psnr)| RdPoint { bpp, psnr }).collect())
}

fn main() {
    let anchor = curve("anchor", &[(0.12, 27.9), (0.25, 30.1), (0.48, 32.6), (0.91, 35.2), (1.6, 37.8)]);
    let test = curve("test", &[(0.10, 28.0), (0.21, 30.3), (0.41, 32.8), (0.80, 35.5), (1.4, 38.0)]);
    println!("{}", test.csv());
    println!("log10(bpp) fit of test: {:?}", fit_log_rate(&test).unwrap());
    println!("BD-rate test vs anchor: {:+.2}%", bd_rate(&test, &anchor).unwrap());
    println!("BD-rate anchor vs test: {:+.2}%", bd_rate(&anchor, &test).unwrap());
}
