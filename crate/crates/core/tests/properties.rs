//! Randomised invariants of the coder, image conversions and analysis tools.

use proptest::prelude::*;
use shallow_ntc::analysis::{bd_rate, curve_length, RdCurve, RdPoint};
use shallow_ntc::entropy::CodedDist;
use shallow_ntc::image::{psnr, Image};
use shallow_ntc::models::{Arch, Codec, ModelConfig};
use shallow_ntc::rangecoder::{decode_latents, encode_latents, rc_decode, rc_encode};
use shallow_ntc::Tensor;

/// Cumulative table over `freqs` scaled to a total of `2^16`, every symbol
/// keeping at least one count.
fn cdf_of(freqs: &[u32]) -> Vec<u32> {
    let total: u64 = freqs.iter().map(|&f| f as u64).sum();
    let budget = (1u64 << 16) - freqs.len() as u64;
    let mut cdf = vec![0u32];
    let mut acc = 0u64;
    for &f in freqs {
        acc += 1 + f as u64 * budget / total;
        cdf.push(acc as u32);
    }
    // hand the rounding slack to the last symbol
    *cdf.last_mut().unwrap() = 1 << 16;
    cdf
}

fn curve(points: &[(f64, f64)]) -> RdCurve {
    RdCurve::new("c", points.iter().map(|&(bpp, psnr)| RdPoint { bpp, psnr }).collect())
}

/// Monotone RD curves: increasing bpp and PSNR.
fn rd_curve() -> impl Strategy<Value = RdCurve> {
    (0.05f64..0.3, 26.0f64..30.0, prop::collection::vec((0.1f64..0.8, 0.5f64..3.0), 4..7)).prop_map(
        |(b0, p0, steps)| {
            let mut pts = vec![(b0, p0)];
            for (db, dp) in steps {
                let (b, p) = *pts.last().unwrap();
                pts.push((b * (1.0 + db), p + dp));
            }
            curve(&pts)
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn range_coder_roundtrips(
        alphabet in prop::collection::vec(1u32..1000, 2..40),
        picks in prop::collection::vec(any::<prop::sample::Index>(), 0..300),
    ) {
        let cdf = cdf_of(&alphabet);
        let symbols: Vec<usize> = picks.iter().map(|i| i.index(alphabet.len())).collect();
        let cdfs = vec![cdf; symbols.len()];
        let bytes = rc_encode(&symbols, &cdfs).unwrap();
        prop_assert_eq!(rc_decode(&bytes, &cdfs, symbols.len()).unwrap(), symbols);
    }

    #[test]
    fn latent_coder_roundtrips_with_escapes(
        items in prop::collection::vec((-300i64..300, -5.0f64..5.0, 0.05f64..40.0), 0..200),
    ) {
        let values: Vec<i64> = items.iter().map(|t| t.0).collect();
        let dists: Vec<CodedDist> = items.iter().map(|t| CodedDist::new(t.1, t.2)).collect();
        let bytes = encode_latents(&values, &dists).unwrap();
        prop_assert_eq!(decode_latents(&bytes, &dists).unwrap(), values);
    }

    #[test]
    fn byte_images_survive_conventions(
        (h, w, bytes) in (1usize..9, 1usize..9).prop_flat_map(|(h, w)| {
            (Just(h), Just(w), prop::collection::vec(any::<u8>(), h * w * 3))
        }),
    ) {
        let img = Image::from_bytes(h, w, &bytes).unwrap();
        prop_assert_eq!(img.to_real().to_int().to_bytes(), bytes.clone());
        prop_assert_eq!(img.to_real().to_bytes(), bytes);
    }

    #[test]
    fn psnr_is_symmetric(
        (a, b) in prop::collection::vec(any::<u8>(), 48).prop_flat_map(|a| {
            (Just(a), prop::collection::vec(any::<u8>(), 48))
        }),
    ) {
        let x = Image::from_bytes(4, 4, &a).unwrap();
        let y = Image::from_bytes(4, 4, &b).unwrap();
        let (p, q) = (psnr(&x, &y).unwrap(), psnr(&y, &x).unwrap());
        prop_assert!(p == q);
    }

    #[test]
    fn bd_rate_of_a_curve_with_itself_is_zero(c in rd_curve()) {
        prop_assert!(bd_rate(&c, &c).unwrap().abs() < 1e-9);
    }

    #[test]
    fn bd_rate_sign_flips_with_order(a in rd_curve(), b in rd_curve()) {
        if let (Ok(ab), Ok(ba)) = (bd_rate(&a, &b), bd_rate(&b, &a)) {
            // (1 + ab)(1 + ba) = 1 in fractional terms
            let prod = (1.0 + ab / 100.0) * (1.0 + ba / 100.0);
            prop_assert!((prod - 1.0).abs() < 1e-9, "{} {}", ab, ba);
            prop_assert!(ab == 0.0 || ab.signum() != ba.signum());
        }
    }

    #[test]
    fn bd_rate_scales_with_rate(c in rd_curve(), factor in 0.3f64..3.0) {
        let scaled = RdCurve::new(
            "s",
            c.points.iter().map(|p| RdPoint { bpp: p.bpp * factor, psnr: p.psnr }).collect(),
        );
        let got = bd_rate(&scaled, &c).unwrap();
        prop_assert!((got - (factor - 1.0) * 100.0).abs() < 1e-6, "{}", got);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn curves_are_never_shorter_than_chords(seed in 0u64..1000, a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let cfg = ModelConfig { arch: Arch::TwoLayer, channels: 6, hidden: 5, filters: 4, ..ModelConfig::default() };
        let codec = Codec::random(&cfg, seed).unwrap();
        let n = 2 * 2 * 6;
        let z0 = Tensor::from_vec(&[2, 2, 6], (0..n).map(|i| a * ((i * 7 % 11) as f64 - 5.0)).collect()).unwrap();
        let z1 = Tensor::from_vec(&[2, 2, 6], (0..n).map(|i| b * ((i * 5 % 13) as f64 - 6.0)).collect()).unwrap();
        let r = curve_length(&z0, &z1, &codec.synthesis, 40).unwrap();
        prop_assert!(r.eta >= 1.0 - 1e-9, "{}", r.eta);
    }
}
