//! Bjontegaard fixtures with known answers.

use shallow_ntc::analysis::{bd_rate, RdCurve, RdPoint};

pub const PSNRS: [f64; 5] = [28.0, 30.0, 32.5, 35.0, 37.0];

/// Anchor with an exact cubic `log10(bpp) = p(psnr)`.
pub fn anchor_log_rate(x: f64) -> f64 {
    let t = (x - 32.0) / 5.0;
    -0.3 + 0.45 * t + 0.04 * t * t - 0.015 * t * t * t
}

pub fn sampled(label: &str, f: impl Fn(f64) -> f64) -> RdCurve {
    RdCurve::new(
        label,
        PSNRS.iter().map(|&psnr| RdPoint { bpp: 10f64.powf(f(psnr)), psnr }).collect(),
    )
}

/// `(name, got, want)` for the identical, doubled and analytic cubic cases.
pub fn bd_fixtures() -> Vec<(&'static str, f64, f64)> {
    let anchor = sampled("anchor", anchor_log_rate);
    let doubled = sampled("doubled", |x| anchor_log_rate(x) + 2f64.log10());
    // a linear offset in the log domain averages to its midpoint value
    let (a, b) = (-0.05, 0.004);
    let tilted = sampled("tilted", |x| anchor_log_rate(x) + a + b * x);
    let mid = (PSNRS[0] + PSNRS[4]) / 2.0;
    vec![
        ("identical", bd_rate(&anchor, &anchor).unwrap(), 0.0),
        ("doubled", bd_rate(&doubled, &anchor).unwrap(), 100.0),
        ("analytic cubic", bd_rate(&tilted, &anchor).unwrap(), (10f64.powf(a + b * mid) - 1.0) * 100.0),
    ]
}
