//! Impulse responses of a synthesis transform, `g(delta e_i) - g(0)`.

use crate::error::{Error, Result};
use crate::image::{Convention, Image};
use crate::models::Synthesis;
use crate::tensor::Tensor;

/// Response to `delta` on channel `channel` of the centre latent of a 3x3
/// grid. JPEG-like decoders return their full `k x k` footprint, two-layer
/// decoders the central `s x s` block.
pub fn impulse_response(model: &Synthesis, channel: usize, delta: f64) -> Result<Tensor> {
    let c = model.channels();
    if channel >= c {
        return Err(Error::InvalidArgument(format!(
            "channel {channel} out of range for {c} channels"
        )));
    }
    let s = model.stride();
    let mut z = Tensor::zeros(&[3, 3, c]);
    let base = model.forward(&z)?;
    z.data_mut()[(3 + 1) * c + channel] = delta;
    let resp = model.forward(&z)?.sub(&base)?;
    match model {
        Synthesis::JpegLike(m) => {
            let k = m.layer.kernel;
            let top = s - m.layer.offset();
            resp.crop(top, top, k, k)
        }
        Synthesis::TwoLayer(_) => resp.crop(s, s, s, s),
    }
}

/// Tiles the responses of `channels` into one image, each scaled to its own
/// peak so that mid-grey is zero.
pub fn filter_mosaic(model: &Synthesis, channels: &[usize], delta: f64) -> Result<Image> {
    if channels.is_empty() {
        return Err(Error::InvalidArgument("no channels to draw".into()));
    }
    let tiles: Vec<Tensor> = channels
        .iter()
        .map(|&c| impulse_response(model, c, delta))
        .collect::<Result<_>>()?;
    let (th, tw, _) = tiles[0].dims3()?;
    let cols = (channels.len() as f64).sqrt().ceil() as usize;
    let rows = channels.len().div_ceil(cols);
    let (h, w) = (rows * (th + 1) + 1, cols * (tw + 1) + 1);
    let mut out = Tensor::full(&[h, w, 3], 255.0);
    for (n, tile) in tiles.iter().enumerate() {
        let peak = tile.max_abs();
        let gain = if peak > 0.0 { 127.0 / peak } else { 0.0 };
        let (top, left) = ((n / cols) * (th + 1) + 1, (n % cols) * (tw + 1) + 1);
        for i in 0..th {
            for j in 0..tw {
                for o in 0..3 {
                    out.set3(top + i, left + j, o, (128.0 + gain * tile.at3(i, j, o)).round());
                }
            }
        }
    }
    Image::new(out, Convention::Int255)
}
