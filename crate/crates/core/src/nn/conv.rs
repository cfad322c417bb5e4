//! Strided convolution and transposed convolution on `(h, w, c)` tensors.
//!
//! Weights are stored as `(k, k, C_in, C_out)`.
//!
//! * Convolution uses symmetric (edge-repeating) mirror padding so that the
//!   output is exactly `(h / s, w / s)`. Input row for output `o`, tap `a`
//!   is `o * s + a - (k - s) / 2`, reflected back into range.
//! * Transposed convolution writes tap `a` of input `i` to output
//!   `i * s + a - (k - s) / 2` and drops anything outside `[0, h * s)`.
//!   With `k == s` the blocks are disjoint; with `k > s` the `k - s` rim of
//!   each block is summed into its neighbours.

use rand::Rng;
use rand_distr::StandardNormal;

use super::gemm::{gemm, View};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub transposed: bool,
    pub weights: Tensor,
    pub bias: Tensor,
}

#[derive(Clone, Debug)]
pub struct ConvGrads {
    pub input: Tensor,
    pub weights: Tensor,
    pub bias: Tensor,
}

impl ConvSpec {
    /// Zero-initialised layer.
    pub fn zeros(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        transposed: bool,
    ) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel,
            stride,
            transposed,
            weights: Tensor::zeros(&[kernel, kernel, in_channels, out_channels]),
            bias: Tensor::zeros(&[out_channels]),
        }
    }

    /// Layer with i.i.d. normal weights of the given standard deviation.
    pub fn random<R: Rng>(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        transposed: bool,
        std: f64,
        rng: &mut R,
    ) -> Self {
        let mut layer = Self::zeros(in_channels, out_channels, kernel, stride, transposed);
        for w in layer.weights.data_mut() {
            *w = std * rng.sample::<f64, _>(StandardNormal);
        }
        layer
    }

    pub fn with_weights(mut self, weights: Tensor, bias: Tensor) -> Result<Self> {
        let expected = [self.kernel, self.kernel, self.in_channels, self.out_channels];
        if weights.shape() != expected || bias.shape() != [self.out_channels] {
            return Err(Error::Shape(format!(
                "conv expects weights {:?} and bias [{}], got {:?} and {:?}",
                expected,
                self.out_channels,
                weights.shape(),
                bias.shape()
            )));
        }
        self.weights = weights;
        self.bias = bias;
        Ok(self)
    }

    /// Leading offset `(k - s) / 2` shared by both directions.
    pub fn offset(&self) -> usize {
        self.kernel.saturating_sub(self.stride) / 2
    }

    /// Weight slice for tap `(a, b)`, shape `(C_in, C_out)`.
    pub fn tap(&self, a: usize, b: usize) -> &[f64] {
        let n = self.in_channels * self.out_channels;
        let t = a * self.kernel + b;
        &self.weights.data()[t * n..(t + 1) * n]
    }

    pub fn output_dims(&self, h: usize, w: usize) -> (usize, usize) {
        if self.transposed {
            (h * self.stride, w * self.stride)
        } else {
            (h / self.stride, w / self.stride)
        }
    }

    fn check_input(&self, x: &Tensor) -> Result<(usize, usize)> {
        let (h, w, c) = x.dims3()?;
        if c != self.in_channels {
            return Err(Error::Shape(format!(
                "layer expects {} input channels, got {c}",
                self.in_channels
            )));
        }
        if !self.transposed && (h % self.stride != 0 || w % self.stride != 0) {
            return Err(Error::Shape(format!(
                "input {h}x{w} is not divisible by stride {}",
                self.stride
            )));
        }
        Ok((h, w))
    }

    /// Weights reordered to `(C_in, k*k*C_out)`.
    fn weights_by_input(&self) -> Vec<f64> {
        let (kk, ci, co) = (self.kernel * self.kernel, self.in_channels, self.out_channels);
        let src = self.weights.data();
        let mut out = vec![0.0; ci * kk * co];
        for t in 0..kk {
            for i in 0..ci {
                let s = (t * ci + i) * co;
                let d = (i * kk + t) * co;
                out[d..d + co].copy_from_slice(&src[s..s + co]);
            }
        }
        out
    }

    fn weights_from_input_major(&self, by_input: &[f64]) -> Tensor {
        let (kk, ci, co) = (self.kernel * self.kernel, self.in_channels, self.out_channels);
        let mut out = vec![0.0; kk * ci * co];
        for t in 0..kk {
            for i in 0..ci {
                let d = (t * ci + i) * co;
                let s = (i * kk + t) * co;
                out[d..d + co].copy_from_slice(&by_input[s..s + co]);
            }
        }
        Tensor::from_vec(self.weights.shape(), out).expect("weight shape")
    }
}

#[inline]
fn mirror(mut idx: isize, n: usize) -> usize {
    let n = n as isize;
    loop {
        if idx < 0 {
            idx = -idx - 1;
        } else if idx >= n {
            idx = 2 * n - idx - 1;
        } else {
            return idx as usize;
        }
    }
}

/// Output row (or column) touched by input `i`, tap `a`, if it survives the crop.
#[inline]
fn transposed_target(i: usize, a: usize, spec: &ConvSpec, out_len: usize) -> Option<usize> {
    let o = (i * spec.stride + a) as isize - spec.offset() as isize;
    (o >= 0 && (o as usize) < out_len).then_some(o as usize)
}

pub fn conv_transpose_forward(x: &Tensor, spec: &ConvSpec) -> Result<Tensor> {
    if !spec.transposed {
        return Err(Error::InvalidArgument(
            "conv_transpose_forward needs a transposed layer".into(),
        ));
    }
    let (h, w) = spec.check_input(x)?;
    let (k, ci, co) = (spec.kernel, spec.in_channels, spec.out_channels);
    let (oh, ow) = spec.output_dims(h, w);
    let p = h * w;
    let row = k * k * co;
    let wr = spec.weights_by_input();
    let mut cols = vec![0.0; p * row];
    gemm(
        View::row_major(x.data(), p, ci),
        View::row_major(&wr, ci, row),
        &mut cols,
        0.0,
    );
    let mut out = Tensor::zeros(&[oh, ow, co]);
    let od = out.data_mut();
    for i in 0..h {
        for j in 0..w {
            let src = &cols[(i * w + j) * row..(i * w + j + 1) * row];
            for a in 0..k {
                let Some(oi) = transposed_target(i, a, spec, oh) else {
                    continue;
                };
                for b in 0..k {
                    let Some(oj) = transposed_target(j, b, spec, ow) else {
                        continue;
                    };
                    let dst = (oi * ow + oj) * co;
                    let s = (a * k + b) * co;
                    for c in 0..co {
                        od[dst + c] += src[s + c];
                    }
                }
            }
        }
    }
    add_bias(&mut out, &spec.bias);
    Ok(out)
}

fn add_bias(out: &mut Tensor, bias: &Tensor) {
    let co = bias.len();
    let b = bias.data();
    for px in out.data_mut().chunks_mut(co) {
        for (v, bb) in px.iter_mut().zip(b) {
            *v += bb;
        }
    }
}

fn bias_grad(upstream: &Tensor, co: usize) -> Tensor {
    let mut g = vec![0.0; co];
    for px in upstream.data().chunks(co) {
        for (acc, v) in g.iter_mut().zip(px) {
            *acc += v;
        }
    }
    Tensor::from_vec(&[co], g).expect("bias shape")
}

/// Vector-Jacobian product of [`conv_transpose_forward`] with respect to the
/// input, the weights and the bias.
pub fn conv_transpose_vjp(x: &Tensor, spec: &ConvSpec, upstream: &Tensor) -> Result<ConvGrads> {
    let input = conv_transpose_input_vjp(x, spec, upstream)?;
    let (h, w) = spec.check_input(x)?;
    let (k, ci, co) = (spec.kernel, spec.in_channels, spec.out_channels);
    let p = h * w;
    let row = k * k * co;
    let cols = gather_transposed(upstream, spec, h, w)?;
    let mut gw = vec![0.0; ci * row];
    gemm(
        View::row_major(x.data(), p, ci).t(),
        View::row_major(&cols, p, row),
        &mut gw,
        0.0,
    );
    Ok(ConvGrads {
        input,
        weights: spec.weights_from_input_major(&gw),
        bias: bias_grad(upstream, co),
    })
}

/// Input-only adjoint of [`conv_transpose_forward`]: a strided correlation.
pub fn conv_transpose_input_vjp(x: &Tensor, spec: &ConvSpec, upstream: &Tensor) -> Result<Tensor> {
    let (h, w) = spec.check_input(x)?;
    let (k, ci, co) = (spec.kernel, spec.in_channels, spec.out_channels);
    let p = h * w;
    let row = k * k * co;
    let cols = gather_transposed(upstream, spec, h, w)?;
    let wr = spec.weights_by_input();
    let mut gx = vec![0.0; p * ci];
    gemm(
        View::row_major(&cols, p, row),
        View::row_major(&wr, ci, row).t(),
        &mut gx,
        0.0,
    );
    Tensor::from_vec(&[h, w, ci], gx)
}

fn gather_transposed(upstream: &Tensor, spec: &ConvSpec, h: usize, w: usize) -> Result<Vec<f64>> {
    let (k, co) = (spec.kernel, spec.out_channels);
    let (oh, ow) = spec.output_dims(h, w);
    if upstream.shape() != [oh, ow, co] {
        return Err(Error::Shape(format!(
            "upstream gradient {:?} does not match output [{oh}, {ow}, {co}]",
            upstream.shape()
        )));
    }
    let row = k * k * co;
    let ud = upstream.data();
    let mut cols = vec![0.0; h * w * row];
    for i in 0..h {
        for j in 0..w {
            let dst = &mut cols[(i * w + j) * row..(i * w + j + 1) * row];
            for a in 0..k {
                let Some(oi) = transposed_target(i, a, spec, oh) else {
                    continue;
                };
                for b in 0..k {
                    let Some(oj) = transposed_target(j, b, spec, ow) else {
                        continue;
                    };
                    let s = (oi * ow + oj) * co;
                    let d = (a * k + b) * co;
                    dst[d..d + co].copy_from_slice(&ud[s..s + co]);
                }
            }
        }
    }
    Ok(cols)
}

/// im2col for the mirrored strided convolution: `(oh*ow, k*k*C_in)`.
fn im2col(x: &Tensor, spec: &ConvSpec) -> Vec<f64> {
    let (h, w, ci) = x.dims3().expect("rank 3");
    let (oh, ow) = spec.output_dims(h, w);
    let k = spec.kernel;
    let off = spec.offset() as isize;
    let row = k * k * ci;
    let xd = x.data();
    let mut cols = vec![0.0; oh * ow * row];
    for oi in 0..oh {
        for oj in 0..ow {
            let dst = &mut cols[(oi * ow + oj) * row..(oi * ow + oj + 1) * row];
            for a in 0..k {
                let si = mirror((oi * spec.stride + a) as isize - off, h);
                for b in 0..k {
                    let sj = mirror((oj * spec.stride + b) as isize - off, w);
                    let s = (si * w + sj) * ci;
                    let d = (a * k + b) * ci;
                    dst[d..d + ci].copy_from_slice(&xd[s..s + ci]);
                }
            }
        }
    }
    cols
}

pub fn conv_forward(x: &Tensor, spec: &ConvSpec) -> Result<Tensor> {
    if spec.transposed {
        return Err(Error::InvalidArgument(
            "conv_forward needs a non-transposed layer".into(),
        ));
    }
    let (h, w) = spec.check_input(x)?;
    let (k, ci, co) = (spec.kernel, spec.in_channels, spec.out_channels);
    let (oh, ow) = spec.output_dims(h, w);
    let cols = im2col(x, spec);
    let mut out = Tensor::zeros(&[oh, ow, co]);
    gemm(
        View::row_major(&cols, oh * ow, k * k * ci),
        View::row_major(spec.weights.data(), k * k * ci, co),
        out.data_mut(),
        0.0,
    );
    add_bias(&mut out, &spec.bias);
    Ok(out)
}

pub fn conv_vjp(x: &Tensor, spec: &ConvSpec, upstream: &Tensor) -> Result<ConvGrads> {
    let (h, w) = spec.check_input(x)?;
    let (k, ci, co) = (spec.kernel, spec.in_channels, spec.out_channels);
    let (oh, ow) = spec.output_dims(h, w);
    if upstream.shape() != [oh, ow, co] {
        return Err(Error::Shape(format!(
            "upstream gradient {:?} does not match output [{oh}, {ow}, {co}]",
            upstream.shape()
        )));
    }
    let p = oh * ow;
    let row = k * k * ci;
    let cols = im2col(x, spec);
    let mut gw = vec![0.0; row * co];
    gemm(
        View::row_major(&cols, p, row).t(),
        View::row_major(upstream.data(), p, co),
        &mut gw,
        0.0,
    );
    let mut gcols = vec![0.0; p * row];
    gemm(
        View::row_major(upstream.data(), p, co),
        View::row_major(spec.weights.data(), row, co).t(),
        &mut gcols,
        0.0,
    );
    let off = spec.offset() as isize;
    let mut gx = Tensor::zeros(&[h, w, ci]);
    let gxd = gx.data_mut();
    for oi in 0..oh {
        for oj in 0..ow {
            let src = &gcols[(oi * ow + oj) * row..(oi * ow + oj + 1) * row];
            for a in 0..k {
                let si = mirror((oi * spec.stride + a) as isize - off, h);
                for b in 0..k {
                    let sj = mirror((oj * spec.stride + b) as isize - off, w);
                    let d = (si * w + sj) * ci;
                    let s = (a * k + b) * ci;
                    for c in 0..ci {
                        gxd[d + c] += src[s + c];
                    }
                }
            }
        }
    }
    Ok(ConvGrads {
        input: gx,
        weights: Tensor::from_vec(spec.weights.shape(), gw)?,
        bias: bias_grad(upstream, co),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn single(k: usize, s: usize, transposed: bool, w: &[f64]) -> ConvSpec {
        ConvSpec::zeros(1, 1, k, s, transposed)
            .with_weights(
                Tensor::from_vec(&[k, k, 1, 1], w.to_vec()).unwrap(),
                Tensor::zeros(&[1]),
            )
            .unwrap()
    }

    #[test]
    fn single_block_transposed() {
        let spec = single(2, 2, true, &[1.0, 0.0, 0.0, 1.0]);
        let z = Tensor::from_vec(&[1, 1, 1], vec![2.0]).unwrap();
        let y = conv_transpose_forward(&z, &spec).unwrap();
        assert_eq!(y.shape(), &[2, 2, 1]);
        assert_eq!(y.data(), &[2.0, 0.0, 0.0, 2.0]);
    }

    #[test]
    fn zero_kernel_gives_bias() {
        let spec = ConvSpec::zeros(3, 2, 4, 2, true)
            .with_weights(
                Tensor::zeros(&[4, 4, 3, 2]),
                Tensor::from_vec(&[2], vec![0.25, -1.0]).unwrap(),
            )
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let z = Tensor::from_vec(&[2, 3, 3], (0..18).map(|_| rng.gen()).collect()).unwrap();
        let y = conv_transpose_forward(&z, &spec).unwrap();
        assert_eq!(y.shape(), &[4, 6, 2]);
        for px in y.data().chunks(2) {
            assert_eq!(px, &[0.25, -1.0]);
        }
    }

    #[test]
    fn overlapping_blocks_are_summed() {
        // k = 3, s = 2: offset 0, so block (i, j) covers rows 2i..2i+3
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let kern: Vec<f64> = (0..9).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let spec = single(3, 2, true, &kern);
        let zv = [1.5, -0.5, 2.0, 0.75];
        let z = Tensor::from_vec(&[2, 2, 1], zv.to_vec()).unwrap();
        let y = conv_transpose_forward(&z, &spec).unwrap();
        let mut oracle = vec![0.0; 16];
        for i in 0..2 {
            for j in 0..2 {
                for a in 0..3 {
                    for b in 0..3 {
                        let (oi, oj) = (2 * i + a, 2 * j + b);
                        if oi < 4 && oj < 4 {
                            oracle[oi * 4 + oj] += zv[i * 2 + j] * kern[a * 3 + b];
                        }
                    }
                }
            }
        }
        for (g, o) in y.data().iter().zip(&oracle) {
            assert!((g - o).abs() < 1e-12);
        }
        // pixel (2, 2) is covered by all four blocks
        let expected = zv[0] * kern[8] + zv[1] * kern[6] + zv[2] * kern[2] + zv[3] * kern[0];
        assert!((y.at3(2, 2, 0) - expected).abs() < 1e-12);
    }

    #[test]
    fn pointwise_conv_is_linear_map() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let spec = ConvSpec::random(3, 2, 1, 1, false, 1.0, &mut rng);
        let x = Tensor::from_vec(&[2, 2, 3], (0..12).map(|v| v as f64 * 0.1).collect()).unwrap();
        let y = conv_forward(&x, &spec).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                for o in 0..2 {
                    let want: f64 = (0..3)
                        .map(|c| x.at3(i, j, c) * spec.weights.data()[c * 2 + o])
                        .sum();
                    assert!((y.at3(i, j, o) - want).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn conv_then_transpose_of_delta_is_autocorrelation() {
        let kern = [0.3, -1.2, 0.5, 2.0, 0.7, -0.4, 1.1, 0.2, -0.9];
        let down = single(3, 1, false, &kern);
        let up = single(3, 1, true, &kern);
        let mut delta = Tensor::zeros(&[9, 9, 1]);
        delta.set3(4, 4, 0, 1.0);
        let y = conv_transpose_forward(&conv_forward(&delta, &down).unwrap(), &up).unwrap();
        for di in -2i32..=2 {
            for dj in -2i32..=2 {
                let mut r = 0.0;
                for a in 0..3i32 {
                    for b in 0..3i32 {
                        let (a2, b2) = (a + di, b + dj);
                        if (0..3).contains(&a2) && (0..3).contains(&b2) {
                            r += kern[(a * 3 + b) as usize] * kern[(a2 * 3 + b2) as usize];
                        }
                    }
                }
                let got = y.at3((4 + di) as usize, (4 + dj) as usize, 0);
                assert!((got - r).abs() < 1e-12, "lag ({di},{dj}): {got} vs {r}");
            }
        }
    }

    #[test]
    fn mirror_padding_preserves_constants() {
        let spec = single(5, 2, false, &[1.0 / 25.0; 25]);
        let x = Tensor::full(&[6, 6, 1], 0.7);
        let y = conv_forward(&x, &spec).unwrap();
        assert_eq!(y.shape(), &[3, 3, 1]);
        assert!(y.data().iter().all(|v| (v - 0.7).abs() < 1e-12));
    }

    #[test]
    fn shape_errors() {
        let spec = ConvSpec::zeros(2, 1, 3, 2, true);
        assert!(conv_transpose_forward(&Tensor::zeros(&[2, 2, 3]), &spec).is_err());
        let x = Tensor::zeros(&[2, 2, 2]);
        assert!(conv_transpose_vjp(&x, &spec, &Tensor::zeros(&[3, 4, 1])).is_err());
        let down = ConvSpec::zeros(2, 1, 3, 2, false);
        assert!(conv_forward(&Tensor::zeros(&[3, 4, 2]), &down).is_err());
    }
}
