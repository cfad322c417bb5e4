//! Simplified inverse GDN: `y_c = x_c * (beta_c + sum_c' gamma[c][c'] * |x_c'|)`.
//!
//! The forward (divisive) form `y_c = x_c / (...)` with the same parameters is
//! used between analysis layers.
//!
//! The trainable values are unconstrained: `beta = beta_raw^2 + BETA_FLOOR`
//! and `gamma = gamma_raw^2`.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const BETA_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct IgdnSpec {
    pub channels: usize,
    pub beta_raw: Tensor,
    pub gamma_raw: Tensor,
}

/// Gradients with respect to the input and the effective `beta`, `gamma`.
#[derive(Clone, Debug)]
pub struct IgdnGrads {
    pub input: Tensor,
    pub beta: Tensor,
    pub gamma: Tensor,
}

impl IgdnSpec {
    /// `beta = 1`, `gamma = gamma_init` on the diagonal.
    pub fn new(channels: usize, gamma_init: f64) -> Self {
        let mut gamma = Tensor::zeros(&[channels, channels]);
        for c in 0..channels {
            gamma.data_mut()[c * channels + c] = gamma_init;
        }
        Self::from_effective(&Tensor::full(&[channels], 1.0), &gamma)
            .expect("consistent shapes")
    }

    /// Builds the raw parameters from effective `beta >= BETA_FLOOR`, `gamma >= 0`.
    pub fn from_effective(beta: &Tensor, gamma: &Tensor) -> Result<Self> {
        let c = beta.len();
        if beta.shape() != [c] || gamma.shape() != [c, c] {
            return Err(Error::Shape(format!(
                "iGDN expects beta [C] and gamma [C, C], got {:?} and {:?}",
                beta.shape(),
                gamma.shape()
            )));
        }
        if beta.data().iter().any(|&b| b < BETA_FLOOR) || gamma.data().iter().any(|&g| g < 0.0) {
            return Err(Error::InvalidArgument(
                "iGDN needs beta >= 1e-6 and gamma >= 0".into(),
            ));
        }
        Ok(Self {
            channels: c,
            beta_raw: beta.map(|b| (b - BETA_FLOOR).sqrt()),
            gamma_raw: gamma.map(f64::sqrt),
        })
    }

    pub fn beta(&self) -> Tensor {
        self.beta_raw.map(|b| b * b + BETA_FLOOR)
    }

    pub fn gamma(&self) -> Tensor {
        self.gamma_raw.map(|g| g * g)
    }

    /// Chains effective-parameter gradients to the raw parameters.
    pub fn raw_grads(&self, grads: &IgdnGrads) -> (Tensor, Tensor) {
        (
            self.beta_raw
                .zip_with(&grads.beta, |r, g| 2.0 * r * g)
                .expect("beta shape"),
            self.gamma_raw
                .zip_with(&grads.gamma, |r, g| 2.0 * r * g)
                .expect("gamma shape"),
        )
    }

    fn check(&self, x: &Tensor) -> Result<()> {
        let (_, _, c) = x.dims3()?;
        if c != self.channels {
            return Err(Error::Shape(format!(
                "iGDN expects {} channels, got {c}",
                self.channels
            )));
        }
        Ok(())
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Per-position normalizer `beta_c + sum_c' gamma[c][c'] |x_c'|`.
fn normalizers(px: &[f64], beta: &[f64], gamma: &[f64], out: &mut [f64]) {
    let c = beta.len();
    for o in 0..c {
        let row = &gamma[o * c..(o + 1) * c];
        out[o] = beta[o] + row.iter().zip(px).map(|(g, x)| g * x.abs()).sum::<f64>();
    }
}

pub fn igdn_forward(x: &Tensor, spec: &IgdnSpec) -> Result<Tensor> {
    spec.check(x)?;
    let c = spec.channels;
    let beta = spec.beta();
    let gamma = spec.gamma();
    let mut out = x.clone();
    let mut norm = vec![0.0; c];
    for px in out.data_mut().chunks_mut(c) {
        normalizers(px, beta.data(), gamma.data(), &mut norm);
        for (v, n) in px.iter_mut().zip(&norm) {
            *v *= n;
        }
    }
    Ok(out)
}

pub fn igdn_vjp(x: &Tensor, spec: &IgdnSpec, upstream: &Tensor) -> Result<IgdnGrads> {
    spec.check(x)?;
    x.ensure_same_shape(upstream)?;
    let c = spec.channels;
    let beta = spec.beta();
    let gamma = spec.gamma();
    let gm = gamma.data();
    let mut gx = x.zeros_like();
    let mut gbeta = vec![0.0; c];
    let mut ggamma = vec![0.0; c * c];
    let mut norm = vec![0.0; c];
    let mut ux = vec![0.0; c];
    for ((px, up), gpx) in x
        .data()
        .chunks(c)
        .zip(upstream.data().chunks(c))
        .zip(gx.data_mut().chunks_mut(c))
    {
        normalizers(px, beta.data(), gm, &mut norm);
        for o in 0..c {
            ux[o] = up[o] * px[o];
            gbeta[o] += ux[o];
        }
        for o in 0..c {
            let row = &mut ggamma[o * c..(o + 1) * c];
            for (g, xv) in row.iter_mut().zip(px) {
                *g += ux[o] * xv.abs();
            }
        }
        for i in 0..c {
            let mixed: f64 = (0..c).map(|o| ux[o] * gm[o * c + i]).sum();
            gpx[i] = up[i] * norm[i] + sign(px[i]) * mixed;
        }
    }
    Ok(IgdnGrads {
        input: gx,
        beta: Tensor::from_vec(&[c], gbeta)?,
        gamma: Tensor::from_vec(&[c, c], ggamma)?,
    })
}

/// Simplified GDN: `y_c = x_c / (beta_c + sum_c' gamma[c][c'] * |x_c'|)`.
pub fn gdn_forward(x: &Tensor, spec: &IgdnSpec) -> Result<Tensor> {
    spec.check(x)?;
    let c = spec.channels;
    let beta = spec.beta();
    let gamma = spec.gamma();
    let mut out = x.clone();
    let mut norm = vec![0.0; c];
    for px in out.data_mut().chunks_mut(c) {
        normalizers(px, beta.data(), gamma.data(), &mut norm);
        for (v, n) in px.iter_mut().zip(&norm) {
            *v /= n;
        }
    }
    Ok(out)
}

pub fn gdn_vjp(x: &Tensor, spec: &IgdnSpec, upstream: &Tensor) -> Result<IgdnGrads> {
    spec.check(x)?;
    x.ensure_same_shape(upstream)?;
    let c = spec.channels;
    let beta = spec.beta();
    let gamma = spec.gamma();
    let gm = gamma.data();
    let mut gx = x.zeros_like();
    let mut gbeta = vec![0.0; c];
    let mut ggamma = vec![0.0; c * c];
    let mut norm = vec![0.0; c];
    // up_c * x_c / n_c^2
    let mut w = vec![0.0; c];
    for ((px, up), gpx) in x
        .data()
        .chunks(c)
        .zip(upstream.data().chunks(c))
        .zip(gx.data_mut().chunks_mut(c))
    {
        normalizers(px, beta.data(), gm, &mut norm);
        for o in 0..c {
            w[o] = up[o] * px[o] / (norm[o] * norm[o]);
            gbeta[o] -= w[o];
        }
        for o in 0..c {
            let row = &mut ggamma[o * c..(o + 1) * c];
            for (g, xv) in row.iter_mut().zip(px) {
                *g -= w[o] * xv.abs();
            }
        }
        for i in 0..c {
            let mixed: f64 = (0..c).map(|o| w[o] * gm[o * c + i]).sum();
            gpx[i] = up[i] / norm[i] - sign(px[i]) * mixed;
        }
    }
    Ok(IgdnGrads {
        input: gx,
        beta: Tensor::from_vec(&[c], gbeta)?,
        gamma: Tensor::from_vec(&[c, c], ggamma)?,
    })
}
