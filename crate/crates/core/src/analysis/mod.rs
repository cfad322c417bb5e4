//! Measurement tools: latent-path geometry, impulse responses, R-D curves
//! and BD-rate, the block-DCT reference codec and the encoder-gap probe.
//!
//! The cost decomposition into irreducible, modelling and inference terms
//! is only measured through encoder-to-encoder differences; its analytic
//! terms have no tractable estimator and are not computed.

pub mod dct;
pub mod filters;
pub mod geometry;
pub mod probe;
pub mod rd;

pub use dct::{dct_basis, dct_codec, fit_dct_baseline, DctBaseline};
pub use filters::{filter_mosaic, impulse_response};
pub use geometry::{curve_length, jvp_affine, jvp_directional, traverse, CurveLength, TraversalReport};
pub use probe::{encode_cost, inference_gap_probe, quantized_cost, ProbeConfig, ProbeRow, ProbeTable};
pub use rd::{bd_rate, fit_log_rate, RdCurve, RdPoint};

use crate::error::Result;

/// Median of a non-empty sample (mean of the middle two for even sizes);
/// NaN when empty.
pub fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Applies `f` to every item on up to `jobs` scoped threads; results keep
/// the input order and the first error wins.
pub fn par_map<T, U, F>(items: &[T], jobs: usize, f: F) -> Result<Vec<U>>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> Result<U> + Sync,
{
    let jobs = jobs.clamp(1, items.len().max(1));
    if jobs == 1 {
        return items.iter().map(&f).collect();
    }
    let chunk = items.len().div_ceil(jobs);
    let parts: Vec<Result<Vec<U>>> = std::thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|c| s.spawn(|| c.iter().map(&f).collect::<Result<Vec<U>>>()))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("worker panicked"))
            .collect()
    });
    let mut out = Vec::with_capacity(items.len());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}
