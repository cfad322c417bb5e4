//! Adam with bias correction.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// First and second moments, one pair per parameter tensor.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AdamState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub step: u64,
}

impl AdamState {
    pub fn new() -> Self {
        Self::default()
    }
}

/// One Adam update of `params` in place. Moments are created on the first call.
pub fn optimizer_step(
    params: &mut [&mut Tensor],
    grads: &[&Tensor],
    state: &mut AdamState,
    lr: f64,
) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::Shape(format!(
            "{} parameters but {} gradients",
            params.len(),
            grads.len()
        )));
    }
    for (p, g) in params.iter().zip(grads) {
        p.ensure_same_shape(g)?;
    }
    if state.m.is_empty() {
        state.m = grads.iter().map(|g| g.zeros_like()).collect();
        state.v = grads.iter().map(|g| g.zeros_like()).collect();
    } else if state.m.len() != grads.len() {
        return Err(Error::Shape("optimizer state does not match parameters".into()));
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - BETA1.powi(t);
    let c2 = 1.0 - BETA2.powi(t);
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        state.m[i].ensure_same_shape(g)?;
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        for (((pv, &gv), mv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
            *mv = BETA1 * *mv + (1.0 - BETA1) * gv;
            *vv = BETA2 * *vv + (1.0 - BETA2) * gv * gv;
            *pv -= lr * (*mv / c1) / ((*vv / c2).sqrt() + EPSILON);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_grads_leave_params() {
        let mut p = Tensor::full(&[3], 1.5);
        let g = Tensor::zeros(&[3]);
        let mut s = AdamState::new();
        optimizer_step(&mut [&mut p], &[&g], &mut s, 0.1).unwrap();
        assert_eq!(p, Tensor::full(&[3], 1.5));
        assert_eq!(s.step, 1);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = Tensor::scalar(0.0);
        let g = Tensor::scalar(1.0);
        let mut s = AdamState::new();
        optimizer_step(&mut [&mut p], &[&g], &mut s, 0.1).unwrap();
        // m_hat = 1, v_hat = 1
        assert!((p.data()[0] + 0.1 / (1.0 + EPSILON)).abs() < 1e-15);
    }

    #[test]
    fn identical_runs_identical_states() {
        let run = || {
            let mut p = Tensor::from_vec(&[2], vec![0.3, -0.2]).unwrap();
            let mut s = AdamState::new();
            for k in 0..5 {
                let g = Tensor::from_vec(&[2], vec![k as f64 * 0.1, -0.7]).unwrap();
                optimizer_step(&mut [&mut p], &[&g], &mut s, 0.01).unwrap();
            }
            (p, s)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn shape_mismatch() {
        let mut p = Tensor::zeros(&[2]);
        let g = Tensor::zeros(&[3]);
        assert!(optimizer_step(&mut [&mut p], &[&g], &mut AdamState::new(), 0.1).is_err());
    }
}
