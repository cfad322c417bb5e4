//! Carry-propagating range coder with a 48-bit window and 16-bit words.
//!
//! The encoder keeps `low` (48 bits plus one carry bit) and `range` in
//! `(2^32, 2^48]`. Symbols are coded against cumulative frequency tables
//! summing to `2^16`; whenever `range` drops below `2^32` the top word of
//! `low` is shifted out, with pending `0xFFFF` words held back until a carry
//! can no longer reach them.
//!
//! Termination writes a single word: the smallest multiple of `2^32` inside
//! the final interval. The decoder treats bytes past the end as zeros and,
//! since it tracks the same `range`, knows exactly how many words the encoder
//! produced; streams of any other length are rejected.

use crate::entropy::{CodedDist, FreqCache, FREQ_BITS};
use crate::error::{Error, Result};

const WINDOW_BITS: u32 = 48;
const WORD_BITS: u32 = 16;
const RENORM: u64 = 1 << 32;
const TOP: u64 = 1 << WINDOW_BITS;
const INITIAL_RANGE: u64 = TOP - 1;

pub struct RangeEncoder {
    low: u64,
    range: u64,
    cache: Option<u16>,
    pending: usize,
    out: Vec<u8>,
}

impl Default for RangeEncoder {
    fn default() -> Self {
        Self::new()
    }
}

impl RangeEncoder {
    pub fn new() -> Self {
        Self {
            low: 0,
            range: INITIAL_RANGE,
            cache: None,
            pending: 0,
            out: Vec::new(),
        }
    }

    fn emit(&mut self, word: u16) {
        self.out.extend_from_slice(&word.to_be_bytes());
    }

    fn shift_low(&mut self) {
        if self.low < TOP - (1 << 32) || self.low >= TOP {
            let carry = (self.low >> WINDOW_BITS) as u16;
            if let Some(c) = self.cache {
                self.emit(c.wrapping_add(carry));
            }
            for _ in 0..self.pending {
                self.emit(0xFFFFu16.wrapping_add(carry));
            }
            self.pending = 0;
            self.cache = Some(((self.low >> 32) & 0xFFFF) as u16);
        } else {
            self.pending += 1;
        }
        self.low = (self.low & 0xFFFF_FFFF) << WORD_BITS;
    }

    /// Narrows the interval to `[start, start + freq)` out of `2^16`.
    pub fn encode(&mut self, start: u32, freq: u32) {
        debug_assert!(freq > 0 && start + freq <= 1 << FREQ_BITS);
        let r = self.range >> FREQ_BITS;
        self.low += r * start as u64;
        self.range = r * freq as u64;
        while self.range < RENORM {
            self.range <<= WORD_BITS;
            self.shift_low();
        }
    }

    pub fn encode_symbol(&mut self, symbol: usize, cdf: &[u32]) -> Result<()> {
        if symbol + 1 >= cdf.len() {
            return Err(Error::SymbolOutOfSupport {
                symbol,
                size: cdf.len().saturating_sub(1),
            });
        }
        self.encode(cdf[symbol], cdf[symbol + 1] - cdf[symbol]);
        Ok(())
    }

    /// Sends 16 bits uniformly.
    pub fn encode_raw16(&mut self, value: u16) {
        self.encode(value as u32, 1);
    }

    pub fn finish(mut self) -> Vec<u8> {
        let v = self.low.div_ceil(1 << 32) << 32;
        self.low = v;
        self.shift_low();
        self.shift_low();
        self.out
    }
}

pub struct RangeDecoder<'a> {
    data: &'a [u8],
    /// Words read so far, including virtual zeros past the end.
    words_read: usize,
    /// Words the matching encoder emitted up to the current position.
    renorms: usize,
    code: u64,
    range: u64,
}

impl<'a> RangeDecoder<'a> {
    pub fn new(data: &'a [u8]) -> Result<Self> {
        if data.len() % 2 != 0 {
            return Err(Error::TruncatedStream);
        }
        let mut d = Self {
            data,
            words_read: 0,
            renorms: 0,
            code: 0,
            range: INITIAL_RANGE,
        };
        for _ in 0..WINDOW_BITS / WORD_BITS {
            d.code = (d.code << WORD_BITS) | d.next_word() as u64;
        }
        Ok(d)
    }

    fn next_word(&mut self) -> u16 {
        let i = 2 * self.words_read;
        self.words_read += 1;
        if i + 1 < self.data.len() {
            u16::from_be_bytes([self.data[i], self.data[i + 1]])
        } else {
            0
        }
    }

    fn target(&self) -> Result<(u64, u32)> {
        let r = self.range >> FREQ_BITS;
        let v = self.code / r;
        if v >= 1 << FREQ_BITS {
            return Err(Error::CdfMismatch);
        }
        Ok((r, v as u32))
    }

    fn consume(&mut self, r: u64, start: u32, freq: u32) {
        self.code -= r * start as u64;
        self.range = r * freq as u64;
        while self.range < RENORM {
            self.range <<= WORD_BITS;
            self.renorms += 1;
            self.code = ((self.code << WORD_BITS) | self.next_word() as u64) & (TOP - 1);
        }
    }

    pub fn decode_symbol(&mut self, cdf: &[u32]) -> Result<usize> {
        let (r, v) = self.target()?;
        if cdf.len() < 2 || *cdf.last().unwrap() != 1 << FREQ_BITS {
            return Err(Error::CdfMismatch);
        }
        // largest s with cdf[s] <= v
        let s = cdf.partition_point(|&c| c <= v) - 1;
        if s + 1 >= cdf.len() {
            return Err(Error::CdfMismatch);
        }
        self.consume(r, cdf[s], cdf[s + 1] - cdf[s]);
        Ok(s)
    }

    pub fn decode_raw16(&mut self) -> Result<u16> {
        let (r, v) = self.target()?;
        self.consume(r, v, 1);
        Ok(v as u16)
    }

    /// Checks that the stream ended exactly where the encoder stopped.
    pub fn finish(self) -> Result<()> {
        let expected = 2 * (self.renorms + 1);
        match self.data.len() {
            n if n < expected => Err(Error::TruncatedStream),
            n if n > expected => Err(Error::TrailingBytes(n - expected)),
            _ => Ok(()),
        }
    }
}

/// Codes `symbols[i]` under `cdfs[i]` (each a cumulative table ending at `2^16`).
pub fn rc_encode<C: AsRef<[u32]>>(symbols: &[usize], cdfs: &[C]) -> Result<Vec<u8>> {
    if symbols.len() != cdfs.len() {
        return Err(Error::InvalidArgument(format!(
            "{} symbols but {} tables",
            symbols.len(),
            cdfs.len()
        )));
    }
    let mut enc = RangeEncoder::new();
    for (&s, cdf) in symbols.iter().zip(cdfs) {
        enc.encode_symbol(s, cdf.as_ref())?;
    }
    Ok(enc.finish())
}

pub fn rc_decode<C: AsRef<[u32]>>(bytes: &[u8], cdfs: &[C], count: usize) -> Result<Vec<usize>> {
    if cdfs.len() < count {
        return Err(Error::InvalidArgument(format!(
            "{count} symbols requested but only {} tables",
            cdfs.len()
        )));
    }
    let mut dec = RangeDecoder::new(bytes)?;
    let symbols = cdfs[..count]
        .iter()
        .map(|cdf| dec.decode_symbol(cdf.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    dec.finish()?;
    Ok(symbols)
}

/// Range-codes integer latents, escaping values outside each table's alphabet.
pub fn encode_latents(values: &[i64], dists: &[CodedDist]) -> Result<Vec<u8>> {
    if values.len() != dists.len() {
        return Err(Error::InvalidArgument(format!(
            "{} latents but {} distributions",
            values.len(),
            dists.len()
        )));
    }
    let mut cache = FreqCache::default();
    let mut enc = RangeEncoder::new();
    for (&v, d) in values.iter().zip(dists) {
        let table = cache.get(d);
        let s = table.symbol_of(v);
        enc.encode_symbol(s, &table.cdf)?;
        if s == table.escape() {
            let raw = v as i32 as u32;
            enc.encode_raw16((raw >> 16) as u16);
            enc.encode_raw16(raw as u16);
        }
    }
    Ok(enc.finish())
}

pub fn decode_latents(bytes: &[u8], dists: &[CodedDist]) -> Result<Vec<i64>> {
    let mut cache = FreqCache::default();
    let mut dec = RangeDecoder::new(bytes)?;
    let mut out = Vec::with_capacity(dists.len());
    for d in dists {
        let table = cache.get(d);
        let s = dec.decode_symbol(&table.cdf)?;
        if s == table.escape() {
            let hi = dec.decode_raw16()? as u32;
            let lo = dec.decode_raw16()? as u32;
            out.push(((hi << 16) | lo) as i32 as i64);
        } else {
            out.push(table.low + s as i64);
        }
    }
    dec.finish()?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn uniform2() -> Vec<u32> {
        vec![0, 32768, 65536]
    }

    #[test]
    fn uniform_binary_stream_size() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let symbols: Vec<usize> = (0..1000).map(|_| rng.gen_range(0..2)).collect();
        let cdfs = vec![uniform2(); 1000];
        let bytes = rc_encode(&symbols, &cdfs).unwrap();
        assert!((120..=130).contains(&bytes.len()), "{} bytes", bytes.len());
        assert_eq!(rc_decode(&bytes, &cdfs, 1000).unwrap(), symbols);
    }

    #[test]
    fn empty_stream() {
        let cdfs: Vec<Vec<u32>> = vec![];
        let bytes = rc_encode(&[], &cdfs).unwrap();
        assert_eq!(bytes.len(), 2);
        assert!(rc_decode(&bytes, &cdfs, 0).unwrap().is_empty());
    }

    #[test]
    fn out_of_support_symbol() {
        assert!(matches!(
            rc_encode(&[2], &[uniform2()]),
            Err(Error::SymbolOutOfSupport { symbol: 2, size: 2 })
        ));
    }

    #[test]
    fn trailing_and_truncated_streams_are_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let symbols: Vec<usize> = (0..500).map(|_| rng.gen_range(0..2)).collect();
        let cdfs = vec![uniform2(); 500];
        let bytes = rc_encode(&symbols, &cdfs).unwrap();
        let mut longer = bytes.clone();
        longer.extend([0, 0]);
        assert!(matches!(
            rc_decode(&longer, &cdfs, 500),
            Err(Error::TrailingBytes(2))
        ));
        assert!(rc_decode(&bytes[..bytes.len() - 2], &cdfs, 500).is_err());
        assert!(rc_decode(&bytes[..bytes.len() - 1], &cdfs, 500).is_err());
    }

    #[test]
    fn escapes_roundtrip() {
        let dists = vec![CodedDist::new(0.0, 0.5); 6];
        let values = vec![0, 1, -300, 70000, i32::MIN as i64, i32::MAX as i64];
        let bytes = encode_latents(&values, &dists).unwrap();
        assert_eq!(decode_latents(&bytes, &dists).unwrap(), values);
    }

    #[test]
    fn carries_propagate_through_pending_words() {
        // highly skewed tables push `low` against the top of the window
        let cdf = vec![0, 1, 65536];
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let symbols: Vec<usize> = (0..20000)
            .map(|_| if rng.gen_bool(0.999) { 1 } else { 0 })
            .collect();
        let cdfs = vec![cdf; symbols.len()];
        let bytes = rc_encode(&symbols, &cdfs).unwrap();
        assert_eq!(rc_decode(&bytes, &cdfs, symbols.len()).unwrap(), symbols);
    }
}
