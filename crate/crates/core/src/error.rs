use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed PPM header: {0}")]
    PpmHeader(String),
    #[error("truncated PPM payload: expected {expected} bytes, found {found}")]
    PpmTruncated { expected: usize, found: usize },
    #[error("unsupported PPM maxval {0} (only 255 is accepted)")]
    PpmMaxval(u32),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("scale {0} is below the 0.01 floor")]
    ScaleBelowFloor(f64),
    #[error("symbol {symbol} is outside the coder alphabet of size {size}")]
    SymbolOutOfSupport { symbol: usize, size: usize },
    #[error("truncated range-coded stream")]
    TruncatedStream,
    #[error("range-coded stream has {0} trailing bytes")]
    TrailingBytes(usize),
    #[error("range decoder state does not match the frequency tables")]
    CdfMismatch,
    #[error("bad magic: expected {expected:?}")]
    BadMagic { expected: &'static str },
    #[error("unsupported version {0}")]
    UnsupportedVersion(u16),
    #[error("model hash mismatch: stream {stream:#018x}, checkpoint {checkpoint:#018x}")]
    HashMismatch { stream: u64, checkpoint: u64 },
    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),
    #[error("malformed bitstream: {0}")]
    Bitstream(String),
    #[error("optimisation diverged at step {step} (cost {cost} vs initial {initial})")]
    Diverged { step: usize, cost: f64, initial: f64 },
    #[error("non-finite loss at step {step}")]
    NonFinite { step: usize },
    #[error("dataset {0} contains no PPM images")]
    EmptyDataset(PathBuf),
    #[error("curves have no overlapping PSNR range")]
    NoOverlap,
    #[error("need at least 4 R-D points, got {0}")]
    TooFewPoints(usize),
    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
