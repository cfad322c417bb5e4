//! Multiply-accumulate accounting for decoders.
//!
//! A transposed convolution on an `h x w x C_in` input costs
//! `C_in * h * w * k^2 * C_out`; a strided convolution costs
//! `out_h * out_w * k^2 * C_in * C_out`. Biases, activations and the
//! normalization divisions are not counted.

use std::fmt;

use super::Codec;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerDesc {
    pub name: String,
    pub in_channels: u64,
    pub out_channels: u64,
    pub kernel: u64,
    pub stride: u64,
    pub transposed: bool,
    /// Spatial downsampling of this layer's input relative to the image.
    pub input_factor: u64,
}

impl LayerDesc {
    /// MACs when decoding an `height x width` image.
    pub fn macs(&self, height: u64, width: u64) -> u64 {
        let (h, w) = (height / self.input_factor, width / self.input_factor);
        let k2 = self.kernel * self.kernel;
        if self.transposed {
            self.in_channels * h * w * k2 * self.out_channels
        } else {
            (h / self.stride) * (w / self.stride) * k2 * self.in_channels * self.out_channels
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ArchDescriptor {
    pub label: String,
    pub layers: Vec<LayerDesc>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MacReport {
    pub label: String,
    pub height: u64,
    pub width: u64,
    /// `(layer name, total MACs)`.
    pub layers: Vec<(String, u64)>,
    pub total: u64,
}

impl MacReport {
    pub fn per_pixel(&self) -> f64 {
        self.total as f64 / (self.height * self.width) as f64
    }

    pub fn kmac_per_pixel(&self) -> f64 {
        self.per_pixel() / 1000.0
    }

    pub fn layer_kmac_per_pixel(&self) -> Vec<(String, f64)> {
        let px = (self.height * self.width) as f64;
        self.layers
            .iter()
            .map(|(n, m)| (n.clone(), *m as f64 / px / 1000.0))
            .collect()
    }
}

impl fmt::Display for MacReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<24} {:>12}", "layer", "KMAC/px")?;
        for (name, k) in self.layer_kmac_per_pixel() {
            writeln!(f, "{name:<24} {k:>12.4}")?;
        }
        write!(f, "{:<24} {:>12.4}", "total", self.kmac_per_pixel())
    }
}

/// Default image size for reports; divisible by every stride used here.
pub const REPORT_SIZE: u64 = 256;

pub fn mac_count(desc: &ArchDescriptor, height: u64, width: u64) -> MacReport {
    let layers: Vec<(String, u64)> = desc
        .layers
        .iter()
        .map(|l| (l.name.clone(), l.macs(height, width)))
        .collect();
    MacReport {
        label: desc.label.clone(),
        height,
        width,
        total: layers.iter().map(|(_, m)| m).sum(),
        layers,
    }
}

fn tconv(name: &str, cin: u64, cout: u64, k: u64, s: u64, input_factor: u64) -> LayerDesc {
    LayerDesc {
        name: name.into(),
        in_channels: cin,
        out_channels: cout,
        kernel: k,
        stride: s,
        transposed: true,
        input_factor,
    }
}

pub fn jpeg_like(c: u64, k: u64, s: u64) -> ArchDescriptor {
    ArchDescriptor {
        label: "jpeg-like".into(),
        layers: vec![tconv("synthesis", c, 3, k, s, s)],
    }
}

/// `conv_1` and `conv_res` are listed separately; together they double `N`.
pub fn two_layer(c: u64, n: u64, k1: u64, s1: u64, k2: u64, s2: u64) -> ArchDescriptor {
    let f = s1 * s2;
    ArchDescriptor {
        label: "two-layer".into(),
        layers: vec![
            tconv("conv_1", c, n, k1, s1, f),
            tconv("conv_res", c, n, k1, s1, f),
            tconv("conv_2", n, 3, k2, s2, s2),
        ],
    }
}

/// JPEG-like synthesis plus the single-layer hyper synthesis the decoder runs.
pub fn jpeg_like_hyper(c: u64, k: u64, s: u64, c_h: u64) -> ArchDescriptor {
    let mut d = jpeg_like(c, k, s);
    d.label = "jpeg-like+hyper".into();
    d.layers.push(tconv("hyper.synthesis", c_h, 2 * c, 6, 4, 4 * s));
    d
}

/// Descriptor of the decoder side of a loaded codec.
pub fn describe(codec: &Codec) -> ArchDescriptor {
    use super::Synthesis;
    let mut d = match &codec.synthesis {
        Synthesis::JpegLike(m) => {
            let l = &m.layer;
            jpeg_like(l.in_channels as u64, l.kernel as u64, l.stride as u64)
        }
        Synthesis::TwoLayer(m) => two_layer(
            m.conv_1.in_channels as u64,
            m.conv_1.out_channels as u64,
            m.conv_1.kernel as u64,
            m.conv_1.stride as u64,
            m.conv_2.kernel as u64,
            m.conv_2.stride as u64,
        ),
    };
    if let Some(hp) = codec.entropy.hyper() {
        let s = codec.synthesis.stride() as u64;
        d.label.push_str("+hyper");
        d.layers.push(tconv(
            "hyper.synthesis",
            hp.hyper_channels() as u64,
            2 * hp.channels() as u64,
            6,
            4,
            4 * s,
        ));
    }
    d
}
