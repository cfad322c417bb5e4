//! Dense row-major tensors of `f64`.
//!
//! The last axis is the fastest varying one. Images, latents, kernels and
//! gradients are all carried by this type; spatial tensors use the
//! `(height, width, channels)` layout.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; n],
        }
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Shape(format!(
                "shape {:?} holds {} values, got {}",
                shape,
                n,
                data.len()
            )));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// `(h, w, c)` of a rank-3 tensor.
    pub fn dims3(&self) -> Result<(usize, usize, usize)> {
        match self.shape[..] {
            [h, w, c] => Ok((h, w, c)),
            _ => Err(Error::Shape(format!(
                "expected a rank-3 tensor, got shape {:?}",
                self.shape
            ))),
        }
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(Error::Shape(format!(
                "cannot reshape {:?} into {:?}",
                self.shape, shape
            )));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.shape)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn ensure_same_shape(&self, other: &Tensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::Shape(format!(
                "shape mismatch: {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn zip_with(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        self.ensure_same_shape(other)?;
        Ok(Self {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn scale(&self, k: f64) -> Tensor {
        self.map(|v| v * k)
    }

    /// `self += k * other`.
    pub fn axpy(&mut self, k: f64, other: &Tensor) -> Result<()> {
        self.ensure_same_shape(other)?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += k * b;
        }
        Ok(())
    }

    pub fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        self.axpy(1.0, other)
    }

    pub fn fill(&mut self, value: f64) {
        self.data.iter_mut().for_each(|v| *v = value);
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn dot(&self, other: &Tensor) -> Result<f64> {
        self.ensure_same_shape(other)?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Mean squared difference.
    pub fn mse(&self, other: &Tensor) -> Result<f64> {
        self.ensure_same_shape(other)?;
        if self.data.is_empty() {
            return Ok(0.0);
        }
        let s: f64 = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        Ok(s / self.data.len() as f64)
    }

    /// Element at `(i, j, c)` of a rank-3 tensor.
    #[inline]
    pub fn at3(&self, i: usize, j: usize, c: usize) -> f64 {
        let w = self.shape[1];
        let ch = self.shape[2];
        self.data[(i * w + j) * ch + c]
    }

    #[inline]
    pub fn set3(&mut self, i: usize, j: usize, c: usize, v: f64) {
        let w = self.shape[1];
        let ch = self.shape[2];
        self.data[(i * w + j) * ch + c] = v;
    }

    /// Channel-wise concatenation of two rank-3 tensors with equal spatial size.
    pub fn concat_channels(a: &Tensor, b: &Tensor) -> Result<Tensor> {
        let (h, w, ca) = a.dims3()?;
        let (hb, wb, cb) = b.dims3()?;
        if (h, w) != (hb, wb) {
            return Err(Error::Shape(format!(
                "cannot concatenate {:?} and {:?}",
                a.shape, b.shape
            )));
        }
        let mut data = Vec::with_capacity(h * w * (ca + cb));
        for p in 0..h * w {
            data.extend_from_slice(&a.data[p * ca..(p + 1) * ca]);
            data.extend_from_slice(&b.data[p * cb..(p + 1) * cb]);
        }
        Tensor::from_vec(&[h, w, ca + cb], data)
    }

    /// Splits a rank-3 tensor's channels at `at`.
    pub fn split_channels(&self, at: usize) -> Result<(Tensor, Tensor)> {
        let (h, w, c) = self.dims3()?;
        if at > c {
            return Err(Error::Shape(format!("cannot split {c} channels at {at}")));
        }
        let mut a = Vec::with_capacity(h * w * at);
        let mut b = Vec::with_capacity(h * w * (c - at));
        for p in 0..h * w {
            a.extend_from_slice(&self.data[p * c..p * c + at]);
            b.extend_from_slice(&self.data[p * c + at..(p + 1) * c]);
        }
        Ok((
            Tensor::from_vec(&[h, w, at], a)?,
            Tensor::from_vec(&[h, w, c - at], b)?,
        ))
    }

    /// Crops the spatial window `[top, top+h) x [left, left+w)`.
    pub fn crop(&self, top: usize, left: usize, h: usize, w: usize) -> Result<Tensor> {
        let (sh, sw, c) = self.dims3()?;
        if top + h > sh || left + w > sw {
            return Err(Error::Shape(format!(
                "crop {h}x{w}+{top}+{left} exceeds {sh}x{sw}"
            )));
        }
        let mut data = Vec::with_capacity(h * w * c);
        for i in top..top + h {
            let start = (i * sw + left) * c;
            data.extend_from_slice(&self.data[start..start + w * c]);
        }
        Tensor::from_vec(&[h, w, c], data)
    }

    /// Replicate-pads the bottom and right edges up to `(h, w)`.
    pub fn pad_replicate(&self, h: usize, w: usize) -> Result<Tensor> {
        let (sh, sw, c) = self.dims3()?;
        if h < sh || w < sw || sh == 0 || sw == 0 {
            return Err(Error::Shape(format!("cannot pad {sh}x{sw} to {h}x{w}")));
        }
        let mut out = Tensor::zeros(&[h, w, c]);
        for i in 0..h {
            let si = i.min(sh - 1);
            for j in 0..w {
                let sj = j.min(sw - 1);
                let src = (si * sw + sj) * c;
                let dst = (i * w + j) * c;
                out.data[dst..dst + c].copy_from_slice(&self.data[src..src + c]);
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_checks_len() {
        assert!(Tensor::from_vec(&[2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::from_vec(&[2, 3], vec![0.0; 6]).is_ok());
    }

    #[test]
    fn mismatched_shapes_are_rejected() {
        let a = Tensor::zeros(&[2, 2, 1]);
        let b = Tensor::zeros(&[1, 4, 1]);
        assert!(a.add(&b).is_err());
        assert!(a.mse(&b).is_err());
    }

    #[test]
    fn split_then_concat_is_identity() {
        let data: Vec<f64> = (0..24).map(|v| v as f64).collect();
        let t = Tensor::from_vec(&[2, 3, 4], data).unwrap();
        let (a, b) = t.split_channels(1).unwrap();
        assert_eq!(a.shape(), &[2, 3, 1]);
        assert_eq!(Tensor::concat_channels(&a, &b).unwrap(), t);
    }

    #[test]
    fn pad_then_crop() {
        let t = Tensor::from_vec(&[1, 2, 1], vec![1.0, 2.0]).unwrap();
        let p = t.pad_replicate(3, 4).unwrap();
        assert_eq!(
            p.data(),
            &[1.0, 2.0, 2.0, 2.0, 1.0, 2.0, 2.0, 2.0, 1.0, 2.0, 2.0, 2.0]
        );
        assert_eq!(p.crop(0, 0, 1, 2).unwrap(), t);
    }
}
