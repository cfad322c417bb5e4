//! The `.shbs` container.
//!
//! ```text
//! offset size field
//!      0    4 magic "SHBS"
//!      4    2 version (u16)
//!      6    4 height H (u32, true image height)
//!     10    4 width W (u32, true image width)
//!     14    1 architecture tag (0 = jpeg-like, 1 = two-layer)
//!     15    1 hyperprior flag (0/1)
//!     16    2 latent channels C (u16)
//!     18    8 model hash (u64, FNV-1a of the checkpoint bytes)
//!     26    4 hyper payload length (u32, only when the flag is set)
//!      …      hyper payload, then the main payload up to end of file
//! ```
//!
//! All integers are little-endian.

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"SHBS";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 26;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Header {
    pub height: u32,
    pub width: u32,
    pub arch: u8,
    pub hyper: bool,
    pub channels: u16,
    pub model_hash: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Bitstream {
    pub header: Header,
    pub payload_hyper: Option<Vec<u8>>,
    pub payload_main: Vec<u8>,
}

impl Bitstream {
    /// Payload size in bits, excluding the header.
    pub fn payload_bits(&self) -> usize {
        8 * (self.payload_main.len() + self.payload_hyper.as_ref().map_or(0, Vec::len))
    }

    /// Errors unless the stream was produced with the given checkpoint hash.
    pub fn check_hash(&self, checkpoint_hash: u64) -> Result<()> {
        if self.header.model_hash != checkpoint_hash {
            return Err(Error::HashMismatch {
                stream: self.header.model_hash,
                checkpoint: checkpoint_hash,
            });
        }
        Ok(())
    }
}

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    bytes
        .iter()
        .fold(OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(PRIME))
}

pub fn pack(bs: &Bitstream) -> Result<Vec<u8>> {
    let h = &bs.header;
    if h.hyper != bs.payload_hyper.is_some() {
        return Err(Error::Bitstream(
            "hyper flag and hyper payload disagree".into(),
        ));
    }
    let mut out = Vec::with_capacity(HEADER_LEN + 4 + bs.payload_bits() / 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&h.height.to_le_bytes());
    out.extend_from_slice(&h.width.to_le_bytes());
    out.push(h.arch);
    out.push(h.hyper as u8);
    out.extend_from_slice(&h.channels.to_le_bytes());
    out.extend_from_slice(&h.model_hash.to_le_bytes());
    if let Some(hp) = &bs.payload_hyper {
        let len = u32::try_from(hp.len())
            .map_err(|_| Error::Bitstream("hyper payload too large".into()))?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(hp);
    }
    out.extend_from_slice(&bs.payload_main);
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Bitstream("unexpected end of stream".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn unpack(bytes: &[u8]) -> Result<Bitstream> {
    let mut r = Reader { bytes, pos: 0 };
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(Error::BadMagic { expected: "SHBS" });
    }
    r.take(4)?;
    let version = r.u16()?;
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let height = r.u32()?;
    let width = r.u32()?;
    let arch = r.u8()?;
    let hyper = match r.u8()? {
        0 => false,
        1 => true,
        v => return Err(Error::Bitstream(format!("invalid hyper flag {v}"))),
    };
    let channels = r.u16()?;
    let model_hash = r.u64()?;
    let payload_hyper = if hyper {
        let n = r.u32()? as usize;
        Some(r.take(n)?.to_vec())
    } else {
        None
    };
    Ok(Bitstream {
        header: Header {
            height,
            width,
            arch,
            hyper,
            channels,
            model_hash,
        },
        payload_hyper,
        payload_main: bytes[r.pos..].to_vec(),
    })
}
