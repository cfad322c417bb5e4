//! Analysis transform: strided convolutions with simplified GDN in between.

use rand::Rng;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::nn::{conv_forward, conv_vjp, gdn_forward, gdn_vjp, ConvSpec, IgdnSpec};
use crate::tensor::Tensor;

use super::params::{accumulate_conv, conv_named, conv_named_mut, NamedMut, NamedRef};

#[derive(Clone, Debug, PartialEq)]
pub struct AnalysisTransform {
    pub layers: Vec<ConvSpec>,
    /// One normalization after every layer except the last.
    pub gdns: Vec<IgdnSpec>,
}

pub struct AnalysisTrace {
    /// Input of every convolution.
    inputs: Vec<Tensor>,
    /// Output of every convolution that is followed by a GDN.
    pre_gdn: Vec<Tensor>,
}

impl AnalysisTransform {
    pub fn new(layers: Vec<ConvSpec>, gdns: Vec<IgdnSpec>) -> Result<Self> {
        if layers.is_empty() || gdns.len() + 1 != layers.len() {
            return Err(Error::InvalidArgument(
                "analysis needs n layers and n - 1 normalizations".into(),
            ));
        }
        if layers[0].in_channels != 3 || layers.iter().any(|l| l.transposed) {
            return Err(Error::InvalidArgument(
                "analysis layers are strided convolutions from RGB".into(),
            ));
        }
        for (w, pair) in layers.windows(2).enumerate() {
            if pair[0].out_channels != pair[1].in_channels
                || gdns[w].channels != pair[0].out_channels
            {
                return Err(Error::Shape("analysis layer channels do not chain".into()));
            }
        }
        Ok(Self { layers, gdns })
    }

    /// Four stride-2 `k x k` layers: `3 -> F -> F -> F -> C`.
    pub fn random<R: Rng>(
        filters: usize,
        channels: usize,
        kernel: usize,
        output_gain: f64,
        rng: &mut R,
    ) -> Self {
        Self::random_layers(filters, channels, kernel, 4, 16, output_gain, rng)
            .expect("16 = 2^4")
    }

    /// `layers` convolutions of equal stride reaching `total_stride`, `F`
    /// filters between them. Kernels are at least as large as the stride.
    pub fn random_layers<R: Rng>(
        filters: usize,
        channels: usize,
        kernel: usize,
        layers: usize,
        total_stride: usize,
        output_gain: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let st = (1..=total_stride)
            .find(|st| layers > 0 && st.checked_pow(layers as u32) == Some(total_stride))
            .ok_or_else(|| {
                Error::Config(format!(
                    "{layers} equal-stride layers cannot reach stride {total_stride}"
                ))
            })?;
        let k = kernel.max(st);
        let mut dims = vec![3];
        dims.extend(std::iter::repeat(filters).take(layers - 1));
        dims.push(channels);
        let convs = (0..layers)
            .map(|i| {
                let fan_in = (k * k * dims[i]) as f64;
                let gain = if i + 1 == layers { output_gain } else { 1.0 };
                ConvSpec::random(dims[i], dims[i + 1], k, st, false, gain / fan_in.sqrt(), rng)
            })
            .collect();
        let gdns = (1..layers).map(|_| IgdnSpec::new(filters, 0.1)).collect();
        Ok(Self { layers: convs, gdns })
    }

    pub fn stride(&self) -> usize {
        self.layers.iter().map(|l| l.stride).product()
    }

    pub fn channels(&self) -> usize {
        self.layers.last().map_or(0, |l| l.out_channels)
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.forward_traced(x)?.0)
    }

    pub fn forward_traced(&self, x: &Tensor) -> Result<(Tensor, AnalysisTrace)> {
        let (h, w, _) = x.dims3()?;
        let s = self.stride();
        if h % s != 0 || w % s != 0 {
            return Err(Error::Shape(format!(
                "analysis input {h}x{w} is not divisible by {s}"
            )));
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre_gdn = Vec::with_capacity(self.gdns.len());
        let mut cur = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let out = conv_forward(&cur, layer)?;
            inputs.push(cur);
            cur = if let Some(g) = self.gdns.get(i) {
                let next = gdn_forward(&out, g)?;
                pre_gdn.push(out);
                next
            } else {
                out
            };
        }
        Ok((cur, AnalysisTrace { inputs, pre_gdn }))
    }

    /// Accumulates parameter gradients into `grads`; returns the input gradient.
    pub fn backward(
        &self,
        trace: &AnalysisTrace,
        upstream: &Tensor,
        grads: &mut AnalysisTransform,
    ) -> Result<Tensor> {
        let mut up = upstream.clone();
        for i in (0..self.layers.len()).rev() {
            if let Some(g) = self.gdns.get(i) {
                let gg = gdn_vjp(&trace.pre_gdn[i], g, &up)?;
                let (gb, gm) = g.raw_grads(&gg);
                grads.gdns[i].beta_raw.add_assign(&gb)?;
                grads.gdns[i].gamma_raw.add_assign(&gm)?;
                up = gg.input;
            }
            let cg = conv_vjp(&trace.inputs[i], &self.layers[i], &up)?;
            accumulate_conv(&mut grads.layers[i], &cg)?;
            up = cg.input;
        }
        Ok(up)
    }

    pub fn zeros_like(&self) -> Self {
        let mut g = self.clone();
        for (_, t) in g.named_tensors_mut() {
            t.fill(0.0);
        }
        g
    }

    pub fn named_tensors(&self) -> Vec<NamedRef<'_>> {
        let mut v = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            v.extend(conv_named(&format!("analysis.{i}"), l));
            if let Some(g) = self.gdns.get(i) {
                v.push((format!("analysis.gdn{i}.beta_raw"), &g.beta_raw));
                v.push((format!("analysis.gdn{i}.gamma_raw"), &g.gamma_raw));
            }
        }
        v
    }

    pub fn named_tensors_mut(&mut self) -> Vec<NamedMut<'_>> {
        let mut v = Vec::new();
        let mut gdns = self.gdns.iter_mut();
        for (i, l) in self.layers.iter_mut().enumerate() {
            v.extend(conv_named_mut(&format!("analysis.{i}"), l));
            if let Some(g) = gdns.next() {
                v.push((format!("analysis.gdn{i}.beta_raw"), &mut g.beta_raw));
                v.push((format!("analysis.gdn{i}.gamma_raw"), &mut g.gamma_raw));
            }
        }
        v
    }
}

/// `z = f(x)` for a real-convention image.
pub fn analyze(model: &AnalysisTransform, x: &Image) -> Result<Tensor> {
    model.forward(x.to_real().pixels())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::Convention;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn pointwise_single_layer() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let layer = ConvSpec::random(3, 2, 1, 1, false, 1.0, &mut rng);
        let a = AnalysisTransform::new(vec![layer.clone()], vec![]).unwrap();
        let x = Tensor::from_vec(&[2, 2, 3], (0..12).map(|v| v as f64 / 24.0 - 0.25).collect())
            .unwrap();
        let z = a.forward(&x).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                for o in 0..2 {
                    let want: f64 = (0..3)
                        .map(|c| x.at3(i, j, c) * layer.weights.data()[c * 2 + o])
                        .sum();
                    assert!((z.at3(i, j, o) - want).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn output_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = AnalysisTransform::random(8, 12, 5, 1.0, &mut rng);
        let img = Image::new(Tensor::zeros(&[32, 48, 3]), Convention::Int255).unwrap();
        assert_eq!(analyze(&a, &img).unwrap().shape(), &[2, 3, 12]);
        let bad = Image::new(Tensor::zeros(&[24, 48, 3]), Convention::Int255).unwrap();
        assert!(analyze(&a, &bad).is_err());
    }
}
