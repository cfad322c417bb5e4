//! Checkpoint container.
//!
//! ```text
//! "SHCK" | version u16 | arch u8 | hyper u8 | C s k N k1 s1 k2 s2 (u16 each)
//! then until EOF, per tensor:
//!   name_len u16 | name | rank u8 | dims u32 * rank | values f64 * prod(dims)
//! ```
//!
//! All integers and floats are little-endian. Tensors appear in
//! [`Codec::named_tensors`] order, so saving a loaded checkpoint reproduces
//! its bytes.

use std::collections::HashMap;
use std::path::Path;

use crate::bitstream::fnv1a64;
use crate::entropy::FactorizedPrior;
use crate::error::{Error, Result};
use crate::nn::{ConvSpec, IgdnSpec};
use crate::tensor::Tensor;

use super::{
    AnalysisTransform, Arch, Codec, EntropyModel, Hyperprior, JpegLikeSynthesis, Synthesis,
    TwoLayerSynthesis,
};

pub const MAGIC: &[u8; 4] = b"SHCK";
pub const VERSION: u16 = 1;

pub fn to_bytes(codec: &Codec) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(codec.arch().tag());
    out.push(codec.entropy.hyper().is_some() as u8);
    for v in codec.hyperparams() {
        out.extend_from_slice(&(v as u16).to_le_bytes());
    }
    for (name, t) in codec.named_tensors() {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(t.rank() as u8);
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn done(&self) -> bool {
        self.pos == self.buf.len()
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<Codec> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4).map_err(|_| bad_magic())? != MAGIC {
        return Err(bad_magic());
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let arch = Arch::from_tag(r.u8()?)?;
    let hyper = match r.u8()? {
        0 => false,
        1 => true,
        f => return Err(Error::Checkpoint(format!("bad hyperprior flag {f}"))),
    };
    let mut hp = [0usize; 8];
    for v in hp.iter_mut() {
        *v = r.u16()? as usize;
    }

    let mut order = Vec::new();
    let mut tensors = HashMap::new();
    while !r.done() {
        let n = r.u16()? as usize;
        let name = String::from_utf8(r.take(n)?.to_vec())
            .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?;
        let rank = r.u8()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32()? as usize);
        }
        let len: usize = shape.iter().product();
        let raw = r.take(len.checked_mul(8).ok_or_else(|| Error::Checkpoint("size overflow".into()))?)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let t = Tensor::from_vec(&shape, data)?;
        if tensors.insert(name.clone(), t).is_some() {
            return Err(Error::Checkpoint(format!("duplicate tensor {name}")));
        }
        order.push(name);
    }

    let mut codec = skeleton(arch, hyper, hp, &tensors)?;
    let mut seen = 0;
    for (name, slot) in codec.named_tensors_mut() {
        let t = tensors
            .get(&name)
            .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))?;
        if t.shape() != slot.shape() {
            return Err(Error::Checkpoint(format!(
                "tensor {name} has shape {:?}, expected {:?}",
                t.shape(),
                slot.shape()
            )));
        }
        *slot = t.clone();
        seen += 1;
    }
    if seen != order.len() {
        return Err(Error::Checkpoint(format!(
            "{} unexpected tensors",
            order.len() - seen
        )));
    }
    if !codec.named_tensors().iter().all(|(_, t)| t.is_finite()) {
        return Err(Error::Checkpoint("non-finite parameter".into()));
    }
    Ok(codec)
}

fn bad_magic() -> Error {
    Error::BadMagic {
        expected: "SHCK".into(),
    }
}

fn shape_of<'a>(tensors: &'a HashMap<String, Tensor>, name: &str) -> Result<&'a [usize]> {
    tensors
        .get(name)
        .map(|t| t.shape())
        .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))
}

/// Zero-valued codec with the architecture described by the header and the
/// stored analysis and hyperprior shapes.
fn skeleton(
    arch: Arch,
    hyper: bool,
    hp: [usize; 8],
    tensors: &HashMap<String, Tensor>,
) -> Result<Codec> {
    let [c, s, k, n, k1, s1, k2, s2] = hp;
    let synthesis = match arch {
        Arch::JpegLike => Synthesis::JpegLike(JpegLikeSynthesis::zeros(c, k, s)?),
        Arch::TwoLayer => Synthesis::TwoLayer(TwoLayerSynthesis::zeros(c, n, k1, s1, k2, s2)?),
    };
    let stride = synthesis.stride();

    let mut layers = Vec::new();
    while tensors.contains_key(&format!("analysis.{}.weight", layers.len())) {
        let sh = shape_of(tensors, &format!("analysis.{}.weight", layers.len()))?;
        if sh.len() != 4 || sh[0] != sh[1] {
            return Err(Error::Checkpoint("analysis weights must be (k, k, in, out)".into()));
        }
        layers.push((sh[0], sh[2], sh[3]));
    }
    let count = layers.len() as u32;
    let per_layer = (1..=stride)
        .find(|st| count > 0 && st.checked_pow(count) == Some(stride))
        .ok_or_else(|| {
            Error::Checkpoint(format!(
                "{count} analysis layers cannot realise stride {stride}"
            ))
        })?;
    let convs = layers
        .iter()
        .map(|&(k, i, o)| ConvSpec::zeros(i, o, k, per_layer, false))
        .collect::<Vec<_>>();
    let gdns = layers[..layers.len() - 1]
        .iter()
        .map(|&(_, _, o)| IgdnSpec::new(o, 0.0))
        .collect();
    let analysis = AnalysisTransform::new(convs, gdns)?;

    let entropy = if hyper {
        let sh = shape_of(tensors, "hyper.analysis.weight")?;
        if sh.len() != 4 {
            return Err(Error::Checkpoint("bad hyper analysis shape".into()));
        }
        EntropyModel::Hyper(Hyperprior::zeros(c, sh[3]))
    } else {
        EntropyModel::Factorized(FactorizedPrior::new(c, 1.0))
    };
    Codec::new(analysis, synthesis, entropy)
}

pub fn save(codec: &Codec, path: impl AsRef<Path>) -> Result<u64> {
    let bytes = to_bytes(codec);
    std::fs::write(path.as_ref(), &bytes).map_err(|e| Error::io(path.as_ref(), e))?;
    Ok(fnv1a64(&bytes))
}

/// Loads a checkpoint; also returns the hash bitstreams are tied to.
pub fn load(path: impl AsRef<Path>) -> Result<(Codec, u64)> {
    let bytes = std::fs::read(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
    Ok((from_bytes(&bytes)?, fnv1a64(&bytes)))
}
