//! Rate-distortion points, curve CSVs and the Bjontegaard rate difference.

use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RdPoint {
    pub bpp: f64,
    pub psnr: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RdCurve {
    pub label: String,
    /// Sorted by bpp.
    pub points: Vec<RdPoint>,
}

impl RdCurve {
    pub fn new(label: impl Into<String>, mut points: Vec<RdPoint>) -> Self {
        points.sort_by(|a, b| a.bpp.total_cmp(&b.bpp));
        Self {
            label: label.into(),
            points,
        }
    }

    pub fn csv(&self) -> String {
        let mut s = String::from("label,bpp,psnr\n");
        for p in &self.points {
            s.push_str(&format!("{},{},{}\n", self.label, p.bpp, p.psnr));
        }
        s
    }

    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        match lines.next().map(str::trim) {
            Some("label,bpp,psnr") => {}
            other => return Err(Error::Config(format!("bad RD curve header {other:?}"))),
        }
        let mut label = String::new();
        let mut points = Vec::new();
        for line in lines {
            let f: Vec<&str> = line.trim().split(',').collect();
            let num = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Config(format!("bad number in RD row {line:?}")))
            };
            if f.len() != 3 {
                return Err(Error::Config(format!("RD row {line:?} needs 3 fields")));
            }
            label = f[0].to_string();
            points.push(RdPoint {
                bpp: num(f[1])?,
                psnr: num(f[2])?,
            });
        }
        Ok(Self::new(label, points))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_csv(&text)
    }
}

/// Least-squares cubic `log10(bpp) = p(psnr)`, coefficients lowest first.
pub fn fit_log_rate(curve: &RdCurve) -> Result<[f64; 4]> {
    let n = curve.points.len();
    if n < 4 {
        return Err(Error::TooFewPoints(n));
    }
    if curve.points.iter().any(|p| !(p.bpp > 0.0) || !p.psnr.is_finite()) {
        return Err(Error::InvalidArgument("RD points need positive bpp and finite PSNR".into()));
    }
    // centre and scale PSNR for conditioning, then expand back
    let mean = curve.points.iter().map(|p| p.psnr).sum::<f64>() / n as f64;
    let spread = curve
        .points
        .iter()
        .map(|p| (p.psnr - mean).abs())
        .fold(0.0, f64::max)
        .max(1e-12);
    let a = DMatrix::from_fn(n, 4, |i, j| ((curve.points[i].psnr - mean) / spread).powi(j as i32));
    let b = DVector::from_iterator(n, curve.points.iter().map(|p| p.bpp.log10()));
    let c = a
        .svd(true, true)
        .solve(&b, 1e-12)
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    // p(x) = sum c_j ((x - m) / s)^j
    let mut out = [0.0; 4];
    for (j, &cj) in c.iter().enumerate() {
        let k = cj / spread.powi(j as i32);
        for (i, o) in out.iter_mut().enumerate().take(j + 1) {
            *o += k * binomial(j, i) * (-mean).powi((j - i) as i32);
        }
    }
    Ok(out)
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn antiderivative(p: &[f64; 4], x: f64) -> f64 {
    p.iter()
        .enumerate()
        .map(|(j, c)| c * x.powi(j as i32 + 1) / (j + 1) as f64)
        .sum()
}

/// Mean rate difference of `test` against `anchor` in percent over their
/// common PSNR range; negative means `test` needs fewer bits.
pub fn bd_rate(test: &RdCurve, anchor: &RdCurve) -> Result<f64> {
    let pt = fit_log_rate(test)?;
    let pa = fit_log_rate(anchor)?;
    let range = |c: &RdCurve| {
        c.points
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.psnr), hi.max(p.psnr)))
    };
    let (lt, ht) = range(test);
    let (la, ha) = range(anchor);
    let (lo, hi) = (lt.max(la), ht.min(ha));
    if !(hi > lo) {
        return Err(Error::NoOverlap);
    }
    let it = antiderivative(&pt, hi) - antiderivative(&pt, lo);
    let ia = antiderivative(&pa, hi) - antiderivative(&pa, lo);
    let avg = (it - ia) / (hi - lo);
    Ok((10f64.powf(avg) - 1.0) * 100.0)
}
