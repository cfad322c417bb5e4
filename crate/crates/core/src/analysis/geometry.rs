//! Straight latent paths pushed through the decoder.
//!
//! For `gamma(t) = (1 - t) z0 + t z1` the decoded curve `g(gamma(t))` is
//! compared against the straight lines between the two reconstructions and
//! between the two originals. Its length is a Riemann sum of `||J v||` with
//! `v = z1 - z0`.

use crate::error::{Error, Result};
use crate::image::Image;
use crate::models::{AnalysisTransform, Synthesis};
use crate::tensor::Tensor;

pub const DEFAULT_STEPS: usize = 100;
pub const DEFAULT_JVP_EPS: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq)]
pub struct TraversalReport {
    pub t: Vec<f64>,
    /// `MSE(g(gamma(t)), (1 - t) x_hat0 + t x_hat1)`.
    pub mse_recon: Vec<f64>,
    /// `MSE(g(gamma(t)), (1 - t) x0 + t x1)`.
    pub mse_gt: Vec<f64>,
    pub length: f64,
    pub chord: f64,
    pub eta: f64,
}

impl TraversalReport {
    pub fn csv(&self) -> String {
        let mut s = String::from("t,mse_recon,mse_gt\n");
        for ((t, a), b) in self.t.iter().zip(&self.mse_recon).zip(&self.mse_gt) {
            s.push_str(&format!("{t},{a:e},{b:e}\n"));
        }
        s
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurveLength {
    pub length: f64,
    pub chord: f64,
    pub eta: f64,
}

/// Exact at both ends and constant when `a == b`.
fn lerp(a: &Tensor, b: &Tensor, t: f64) -> Result<Tensor> {
    if t == 1.0 {
        a.ensure_same_shape(b)?;
        return Ok(b.clone());
    }
    a.zip_with(b, |x, y| x + t * (y - x))
}

/// `(g(z + eps v) - g(z - eps v)) / (2 eps)`.
pub fn jvp_directional(model: &Synthesis, z: &Tensor, v: &Tensor, eps: f64) -> Result<Tensor> {
    z.ensure_same_shape(v)?;
    if eps <= 0.0 {
        return Err(Error::InvalidArgument(format!("step {eps} must be positive")));
    }
    let plus = z.zip_with(v, |a, b| a + eps * b)?;
    let minus = z.zip_with(v, |a, b| a - eps * b)?;
    Ok(model.forward(&plus)?.sub(&model.forward(&minus)?)?.scale(0.5 / eps))
}

/// Exact `J v` of an affine decoder: `g(v) - g(0)`.
pub fn jvp_affine(model: &Synthesis, v: &Tensor) -> Result<Tensor> {
    if !model.is_affine() {
        return Err(Error::InvalidArgument("decoder is not affine".into()));
    }
    model.forward(v)?.sub(&model.forward(&v.zeros_like())?)
}

/// Length of `g(gamma)` over `steps` equal intervals.
///
/// Each `||J v||` is a central difference at the interval midpoint with a
/// step of half the interval, so the sum is the length of the inscribed
/// polyline: never shorter than the chord, and exact for affine decoders.
pub fn curve_length(z0: &Tensor, z1: &Tensor, model: &Synthesis, steps: usize) -> Result<CurveLength> {
    z0.ensure_same_shape(z1)?;
    if steps == 0 {
        return Err(Error::InvalidArgument("need at least one step".into()));
    }
    let v = z1.sub(z0)?;
    let n = steps as f64;
    let mut length = 0.0;
    for i in 0..steps {
        let mid = lerp(z0, z1, (i as f64 + 0.5) / n)?;
        length += jvp_directional(model, &mid, &v, 0.5 / n)?.norm() / n;
    }
    let chord = model.forward(z1)?.sub(&model.forward(z0)?)?.norm();
    let eta = if chord == 0.0 { 1.0 } else { length / chord };
    Ok(CurveLength { length, chord, eta })
}

/// Decodes the straight latent path between the encodings of `x0` and `x1`.
/// Quantization is ignored.
pub fn traverse(
    x0: &Image,
    x1: &Image,
    analysis: &AnalysisTransform,
    synthesis: &Synthesis,
    steps: usize,
) -> Result<TraversalReport> {
    if (x0.height(), x0.width()) != (x1.height(), x1.width()) {
        return Err(Error::Shape(format!(
            "endpoints are {}x{} and {}x{}",
            x0.height(),
            x0.width(),
            x1.height(),
            x1.width()
        )));
    }
    if steps < 2 {
        return Err(Error::InvalidArgument("need at least two grid points".into()));
    }
    let (r0, r1) = (x0.to_real().into_pixels(), x1.to_real().into_pixels());
    let z0 = analysis.forward(&r0)?;
    let z1 = analysis.forward(&r1)?;
    let (xh0, xh1) = (synthesis.forward(&z0)?, synthesis.forward(&z1)?);
    let mut report = TraversalReport {
        t: Vec::with_capacity(steps),
        mse_recon: Vec::with_capacity(steps),
        mse_gt: Vec::with_capacity(steps),
        length: 0.0,
        chord: 0.0,
        eta: 1.0,
    };
    for i in 0..steps {
        let t = i as f64 / (steps - 1) as f64;
        let curve = synthesis.forward(&lerp(&z0, &z1, t)?)?;
        report.t.push(t);
        report.mse_recon.push(curve.mse(&lerp(&xh0, &xh1, t)?)?);
        report.mse_gt.push(curve.mse(&lerp(&r0, &r1, t)?)?);
    }
    let cl = curve_length(&z0, &z1, synthesis, steps)?;
    report.length = cl.length;
    report.chord = cl.chord;
    report.eta = cl.eta;
    Ok(report)
}
