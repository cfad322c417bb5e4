//! Procedural image sets for training and evaluation.
//!
//! `dead_leaves` occludes shaded disks with power-law radii, which gives the
//! scale-invariant edge statistics and `1/f` spectra of natural photographs.
//! `gaussian_blobs` is a smooth, easy set for smoke runs.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::image::{list_ppm_files, load_image, save_image, Convention, Image};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SyntheticKind {
    DeadLeaves,
    Blobs,
}

impl fmt::Display for SyntheticKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SyntheticKind::DeadLeaves => "dead-leaves",
            SyntheticKind::Blobs => "blobs",
        })
    }
}

impl FromStr for SyntheticKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dead-leaves" | "natural" => Ok(SyntheticKind::DeadLeaves),
            "blobs" => Ok(SyntheticKind::Blobs),
            other => Err(Error::Config(format!("unknown synthetic image kind {other:?}"))),
        }
    }
}

fn random_colour<R: Rng>(rng: &mut R) -> [f64; 3] {
    // luminance plus a small chroma offset: channels stay strongly correlated
    let l: f64 = rng.gen_range(0.1..0.9);
    let mut c = [0.0; 3];
    for v in c.iter_mut() {
        *v = (l + 0.12 * rng.sample::<f64, _>(StandardNormal)).clamp(0.0, 1.0);
    }
    c
}

fn to_image(h: usize, w: usize, vals: Vec<f64>) -> Image {
    let px = vals.iter().map(|v| (v * 255.0).round().clamp(0.0, 255.0)).collect();
    Image::new(Tensor::from_vec(&[h, w, 3], px).expect("shape"), Convention::Int255)
        .expect("three channels")
}

pub fn dead_leaves(height: usize, width: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (hf, wf) = (height as f64, width as f64);
    let r_min = 4.0;
    let r_max = hf.max(wf) / 2.0;
    let mut vals = vec![f64::NAN; height * width * 3];
    let mut covered = 0;
    let total = height * width;
    let mut leaves = 0;
    // front-to-back: each pixel takes the first leaf that covers it
    while covered < total && leaves < 5000 {
        leaves += 1;
        // density proportional to r^-3
        let u: f64 = rng.gen();
        let r = 1.0 / ((1.0 - u) / (r_min * r_min) + u / (r_max * r_max)).sqrt();
        let cy = rng.gen_range(-r..hf + r);
        let cx = rng.gen_range(-r..wf + r);
        let base = random_colour(&mut rng);
        let (gy, gx) = (
            0.15 * rng.sample::<f64, _>(StandardNormal) / r.max(4.0),
            0.15 * rng.sample::<f64, _>(StandardNormal) / r.max(4.0),
        );
        let i0 = (cy - r).floor().max(0.0) as usize;
        let i1 = ((cy + r).ceil().max(0.0) as usize).min(height);
        let j0 = (cx - r).floor().max(0.0) as usize;
        let j1 = ((cx + r).ceil().max(0.0) as usize).min(width);
        for i in i0..i1 {
            for j in j0..j1 {
                let (dy, dx) = (i as f64 + 0.5 - cy, j as f64 + 0.5 - cx);
                if dy * dy + dx * dx > r * r {
                    continue;
                }
                let p = (i * width + j) * 3;
                if !vals[p].is_nan() {
                    continue;
                }
                let shade = dy * gy + dx * gx;
                for c in 0..3 {
                    vals[p + c] = (base[c] + shade).clamp(0.0, 1.0);
                }
                covered += 1;
            }
        }
    }
    let fill = random_colour(&mut rng);
    for (k, v) in vals.iter_mut().enumerate() {
        if v.is_nan() {
            *v = fill[k % 3];
        }
    }
    let mut vals = box_blur(&vals, height, width);
    // mild sensor noise
    for v in vals.iter_mut() {
        *v = (*v + 0.01 * rng.sample::<f64, _>(StandardNormal)).clamp(0.0, 1.0);
    }
    to_image(height, width, vals)
}

/// 3x3 box blur with edge clamping, standing in for lens blur.
fn box_blur(vals: &[f64], height: usize, width: usize) -> Vec<f64> {
    let mut out = vec![0.0; vals.len()];
    for i in 0..height {
        for j in 0..width {
            for c in 0..3 {
                let mut acc = 0.0;
                for di in [-1i64, 0, 1] {
                    for dj in [-1i64, 0, 1] {
                        let ii = (i as i64 + di).clamp(0, height as i64 - 1) as usize;
                        let jj = (j as i64 + dj).clamp(0, width as i64 - 1) as usize;
                        acc += vals[(ii * width + jj) * 3 + c];
                    }
                }
                out[(i * width + j) * 3 + c] = acc / 9.0;
            }
        }
    }
    out
}

pub fn gaussian_blobs(height: usize, width: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bg = random_colour(&mut rng);
    let mut vals: Vec<f64> = (0..height * width * 3).map(|k| bg[k % 3]).collect();
    let n = rng.gen_range(2..6);
    for _ in 0..n {
        let cy = rng.gen_range(0.0..height as f64);
        let cx = rng.gen_range(0.0..width as f64);
        let s = rng.gen_range(0.08..0.3) * height.min(width) as f64;
        let amp: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-0.4..0.4));
        for i in 0..height {
            for j in 0..width {
                let (dy, dx) = (i as f64 - cy, j as f64 - cx);
                let g = (-(dy * dy + dx * dx) / (2.0 * s * s)).exp();
                for c in 0..3 {
                    vals[(i * width + j) * 3 + c] += amp[c] * g;
                }
            }
        }
    }
    for v in vals.iter_mut() {
        *v = v.clamp(0.0, 1.0);
    }
    to_image(height, width, vals)
}

pub fn synthetic_image(kind: SyntheticKind, height: usize, width: usize, seed: u64) -> Image {
    match kind {
        SyntheticKind::DeadLeaves => dead_leaves(height, width, seed),
        SyntheticKind::Blobs => gaussian_blobs(height, width, seed),
    }
}

/// Writes `count` images named `img_0000.ppm`, ... into `dir`.
pub fn write_dataset(
    dir: impl AsRef<Path>,
    kind: SyntheticKind,
    count: usize,
    size: usize,
    seed: u64,
) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    (0..count)
        .map(|i| {
            let path = dir.join(format!("img_{i:04}.ppm"));
            let img = synthetic_image(kind, size, size, seed.wrapping_mul(1_000_003).wrapping_add(i as u64));
            save_image(&img, &path)?;
            Ok(path)
        })
        .collect()
}

/// All PPM images of a directory in lexicographic order.
pub fn load_dir(dir: impl AsRef<Path>) -> Result<Vec<Image>> {
    let files = list_ppm_files(dir.as_ref())?;
    if files.is_empty() {
        return Err(Error::EmptyDataset(dir.as_ref().to_path_buf()));
    }
    files.iter().map(load_image).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_seed_dependent() {
        let a = dead_leaves(32, 32, 5);
        assert_eq!(a, dead_leaves(32, 32, 5));
        assert_ne!(a, dead_leaves(32, 32, 6));
        assert_eq!(gaussian_blobs(16, 24, 1), gaussian_blobs(16, 24, 1));
    }

    #[test]
    fn images_are_not_flat() {
        let a = dead_leaves(64, 64, 1);
        let d = a.pixels().data();
        let mean = d.iter().sum::<f64>() / d.len() as f64;
        let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d.len() as f64;
        assert!(var > 100.0, "variance {var}");
    }
}
