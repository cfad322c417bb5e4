//! Bit-exact coding checks shared by the codec tests and the acceptance run.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shallow_ntc::bitstream::{pack, unpack};
use shallow_ntc::encoder::{decode, transmit, EncodeConfig};
use shallow_ntc::entropy::CodedDist;
use shallow_ntc::models::{checkpoint, Codec};
use shallow_ntc::rangecoder::{decode_latents, encode_latents, rc_decode, rc_encode};
use shallow_ntc::Image;

/// Slack allowed between the payload and the model rate of one stream.
pub const STREAM_SLACK_BITS: f64 = 32.0;
pub const RELATIVE_SLACK: f64 = 1e-3;

fn random_cdf(rng: &mut ChaCha8Rng) -> Vec<u32> {
    let n = rng.gen_range(2..64);
    let freqs: Vec<u64> = (0..n).map(|_| rng.gen_range(1..5000)).collect();
    let total: u64 = freqs.iter().sum();
    let budget = (1u64 << 16) - n as u64;
    let mut cdf = vec![0u32];
    let mut acc = 0u64;
    for f in freqs {
        acc += 1 + f * budget / total;
        cdf.push(acc as u32);
    }
    *cdf.last_mut().unwrap() = 1 << 16;
    cdf
}

/// `count` random streams through both coders; returns how many failed.
pub fn range_coder_roundtrips(count: usize, seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = 0;
    for i in 0..count {
        let len = rng.gen_range(0..64);
        let ok = if i % 2 == 0 {
            let cdfs: Vec<Vec<u32>> = (0..len).map(|_| random_cdf(&mut rng)).collect();
            let symbols: Vec<usize> = cdfs.iter().map(|c| rng.gen_range(0..c.len() - 1)).collect();
            rc_encode(&symbols, &cdfs)
                .and_then(|b| rc_decode(&b, &cdfs, len))
                .is_ok_and(|back| back == symbols)
        } else {
            // latent coding, including escapes far outside the tables
            let dists: Vec<CodedDist> =
                (0..len).map(|_| CodedDist::new(rng.gen_range(-8.0..8.0), rng.gen_range(0.05..30.0))).collect();
            let values: Vec<i64> = (0..len)
                .map(|_| if rng.gen_bool(0.05) { rng.gen_range(-70_000..70_000) } else { rng.gen_range(-20..20) })
                .collect();
            encode_latents(&values, &dists)
                .and_then(|b| decode_latents(&b, &dists))
                .is_ok_and(|back| back == values)
        };
        failures += usize::from(!ok);
    }
    failures
}

#[derive(Clone, Copy, Debug)]
pub struct Transmission {
    pub payload_bits: f64,
    pub model_bits: f64,
    pub streams: usize,
    pub deterministic: bool,
}

impl Transmission {
    pub fn within_slack(&self) -> bool {
        (self.payload_bits - self.model_bits).abs()
            <= STREAM_SLACK_BITS * self.streams as f64 + RELATIVE_SLACK * self.model_bits
    }
}

/// Encodes twice, packs, unpacks and decodes twice through a checkpoint
/// reload; deterministic when all bytes and pixels agree.
pub fn transmit_twice(x: &Image, codec: &Codec, cfg: &EncodeConfig) -> shallow_ntc::Result<Transmission> {
    let bytes = checkpoint::to_bytes(codec);
    let hash = shallow_ntc::bitstream::fnv1a64(&bytes);
    let reloaded = checkpoint::from_bytes(&bytes)?;
    let (bs1, stats) = transmit(x, cfg, codec, hash)?;
    let (bs2, _) = transmit(x, cfg, &reloaded, hash)?;
    let (p1, p2) = (pack(&bs1)?, pack(&bs2)?);
    let d1 = decode(&unpack(&p1)?, codec, hash)?;
    let d2 = decode(&unpack(&p2)?, &reloaded, hash)?;
    let psnr = shallow_ntc::image::psnr(&x.to_int(), &d1)?;
    Ok(Transmission {
        payload_bits: stats.payload_bits as f64,
        model_bits: stats.model_bits,
        streams: 1 + usize::from(bs1.payload_hyper.is_some()),
        deterministic: p1 == p2 && d1 == d2 && psnr == stats.psnr,
    })
}
