//! RGB images, binary PPM (P6) I/O, pixel metrics and patch sampling.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// PSNR reported for identical images.
pub const PSNR_CAP_DB: f64 = 100.0;

/// Which value convention an [`Image`] currently uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Convention {
    /// Integers 0..=255 (I/O convention).
    Int255,
    /// Reals in [-0.5, 0.5] (training and analysis convention).
    Real,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pixels: Tensor,
    convention: Convention,
}

impl Image {
    pub fn new(pixels: Tensor, convention: Convention) -> Result<Self> {
        let (_, _, c) = pixels.dims3()?;
        if c != 3 {
            return Err(Error::Shape(format!("images have 3 channels, got {c}")));
        }
        Ok(Self { pixels, convention })
    }

    pub fn from_bytes(height: usize, width: usize, bytes: &[u8]) -> Result<Self> {
        let data = bytes.iter().map(|&b| b as f64).collect();
        Self::new(Tensor::from_vec(&[height, width, 3], data)?, Convention::Int255)
    }

    pub fn height(&self) -> usize {
        self.pixels.shape()[0]
    }

    pub fn width(&self) -> usize {
        self.pixels.shape()[1]
    }

    pub fn convention(&self) -> Convention {
        self.convention
    }

    pub fn pixels(&self) -> &Tensor {
        &self.pixels
    }

    pub fn into_pixels(self) -> Tensor {
        self.pixels
    }

    /// Converts to the `[-0.5, 0.5]` convention: `v / 255 - 0.5`.
    pub fn to_real(&self) -> Image {
        match self.convention {
            Convention::Real => self.clone(),
            Convention::Int255 => Image {
                pixels: self.pixels.map(|v| v / 255.0 - 0.5),
                convention: Convention::Real,
            },
        }
    }

    /// Converts to the integer convention, clamping and rounding.
    pub fn to_int(&self) -> Image {
        match self.convention {
            Convention::Int255 => self.clone(),
            Convention::Real => Image {
                pixels: self
                    .pixels
                    .map(|v| ((v + 0.5) * 255.0).round().clamp(0.0, 255.0)),
                convention: Convention::Int255,
            },
        }
    }

    /// Interleaved RGB bytes; values are clamped and rounded.
    pub fn to_bytes(&self) -> Vec<u8> {
        let int = self.to_int();
        int.pixels
            .data()
            .iter()
            .map(|&v| v.round().clamp(0.0, 255.0) as u8)
            .collect()
    }

    pub fn crop(&self, top: usize, left: usize, h: usize, w: usize) -> Result<Image> {
        Ok(Image {
            pixels: self.pixels.crop(top, left, h, w)?,
            convention: self.convention,
        })
    }
}

fn next_token(bytes: &[u8], pos: &mut usize) -> Result<String> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() && bytes[*pos] != b'#' {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::PpmHeader("unexpected end of header".into()));
    }
    Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
}

fn parse_dim(tok: &str, what: &str) -> Result<usize> {
    match tok.parse::<usize>() {
        Ok(v) if v > 0 => Ok(v),
        _ => Err(Error::PpmHeader(format!("invalid {what} {tok:?}"))),
    }
}

/// Decodes an in-memory P6 file.
pub fn decode_ppm(bytes: &[u8]) -> Result<Image> {
    let mut pos = 0;
    let magic = next_token(bytes, &mut pos)?;
    if magic != "P6" {
        return Err(Error::PpmHeader(format!("magic {magic:?} is not P6")));
    }
    let width = parse_dim(&next_token(bytes, &mut pos)?, "width")?;
    let height = parse_dim(&next_token(bytes, &mut pos)?, "height")?;
    let maxval_tok = next_token(bytes, &mut pos)?;
    let maxval: u32 = maxval_tok
        .parse()
        .map_err(|_| Error::PpmHeader(format!("invalid maxval {maxval_tok:?}")))?;
    if maxval != 255 {
        return Err(Error::PpmMaxval(maxval));
    }
    // exactly one whitespace byte separates the header from the raster
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(Error::PpmTruncated {
            expected: width * height * 3,
            found: 0,
        });
    }
    pos += 1;
    let expected = width * height * 3;
    let payload = &bytes[pos..];
    if payload.len() < expected {
        return Err(Error::PpmTruncated {
            expected,
            found: payload.len(),
        });
    }
    Image::from_bytes(height, width, &payload[..expected])
}

/// Encodes an image as P6 with a normalized `P6\n<w> <h>\n255\n` header.
pub fn encode_ppm(img: &Image) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(img.to_bytes());
    out
}

pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_ppm(&bytes)
}

pub fn save_image(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_ppm(img)).map_err(|e| Error::io(path, e))
}

/// Mean squared error in the 0..255 convention.
pub fn mse255(a: &Image, b: &Image) -> Result<f64> {
    a.to_int().pixels.mse(&b.to_int().pixels)
}

/// Peak signal-to-noise ratio in dB, capped at `cap` for identical images.
pub fn psnr_with_cap(a: &Image, b: &Image, cap: f64) -> Result<f64> {
    let mse = mse255(a, b)?;
    if mse == 0.0 {
        return Ok(cap);
    }
    Ok((10.0 * (255.0f64 * 255.0 / mse).log10()).min(cap))
}

pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    psnr_with_cap(a, b, PSNR_CAP_DB)
}

/// PSNR for a known MSE in the 0..255 convention.
pub fn psnr_from_mse255(mse: f64) -> f64 {
    if mse <= 0.0 {
        PSNR_CAP_DB
    } else {
        (10.0 * (255.0f64 * 255.0 / mse).log10()).min(PSNR_CAP_DB)
    }
}

/// Uniform random top-left offsets `(top, left)` for `count` crops.
pub fn patch_offsets(
    height: usize,
    width: usize,
    size: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<(usize, usize)>> {
    if size == 0 || size > height || size > width {
        return Err(Error::InvalidArgument(format!(
            "patch size {size} does not fit a {height}x{width} image"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count)
        .map(|_| {
            (
                rng.gen_range(0..=height - size),
                rng.gen_range(0..=width - size),
            )
        })
        .collect())
}

pub fn extract_patches(img: &Image, size: usize, count: usize, seed: u64) -> Result<Vec<Image>> {
    patch_offsets(img.height(), img.width(), size, count, seed)?
        .into_iter()
        .map(|(t, l)| img.crop(t, l, size, size))
        .collect()
}

/// PPM files of a directory in lexicographic filename order.
pub fn list_ppm_files(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .map(|e| e.eq_ignore_ascii_case("ppm"))
                    .unwrap_or(false)
        })
        .collect();
    files.sort();
    Ok(files)
}
