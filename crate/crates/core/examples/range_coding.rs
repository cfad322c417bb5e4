//! Range-codes discretized Gaussian latents and compares the stream size with
//! the ideal code length under the same distributions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use shallow_ntc::entropy::{discretized_gaussian_pmf, CodedDist};
use shallow_ntc::rangecoder::{decode_latents, encode_latents};

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for sigma in [0.3, 1.0, 4.0, 20.0] {
        let n = 20_000;
        let dists = vec![CodedDist::new(0.0, sigma); n];
        let d = &dists[0];
        let values: Vec<i64> = (0..n)
            .map(|_| rng.sample(Normal::new(d.mean(), d.scale()).unwrap()).round() as i64)
            .collect();
        let bytes = encode_latents(&values, &dists).unwrap();
        assert_eq!(decode_latents(&bytes, &dists).unwrap(), values);
        let ideal: f64 = values
            .iter()
            .map(|&v| -discretized_gaussian_pmf(v, d.mean(), d.scale()).unwrap().log2())
            .sum();
        println!(
            "sigma {sigma:>5}: {:>7} bits coded, {:>9.1} ideal, overhead {:+.3}%",
            8 * bytes.len(),
            ideal,
            100.0 * (8.0 * bytes.len() as f64 / ideal - 1.0)
        );
    }
    // values far outside the table are escaped and still decode exactly
    let dists = vec![CodedDist::new(0.0, 0.5); 3];
    let wild = vec![0, 123_456, -98_765];
    let bytes = encode_latents(&wild, &dists).unwrap();
    println!("escaped {:?} in {} bytes -> {:?}", wild, bytes.len(), decode_latents(&bytes, &dists).unwrap());
}
