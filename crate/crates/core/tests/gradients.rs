//! Finite-difference checks of every vector-Jacobian product.

mod common;

use common::gradcheck::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use shallow_ntc::nn::*;
use shallow_ntc::Tensor;

fn assert_all_below(checks: Vec<Check>, tol: f64) {
    for (what, err) in checks {
        assert!(err < tol, "{what}: worst relative error {err:e} >= {tol:e}");
    }
}

#[test]
fn conv_transpose_vjp_matches_differences() {
    assert_all_below(conv_transpose(), LAYER_TOL);
}

#[test]
fn conv_vjp_matches_differences() {
    assert_all_below(conv(), LAYER_TOL);
}

#[test]
fn normalization_vjps_match_differences() {
    assert_all_below(normalization(), LAYER_TOL);
}

#[test]
fn noisy_rate_gradients_match_differences() {
    assert_all_below(noisy_rate_grads(), LAYER_TOL);
}

#[test]
fn analyze_synthesize_mse_chain() {
    assert_all_below(analysis_synthesis_chain(), LAYER_TOL);
}

#[test]
fn full_loss_gradients() {
    assert_all_below(full_chain_checks(), CHAIN_TOL);
}

#[test]
fn input_only_transpose_vjp_agrees() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for (k, s) in [(3, 2), (6, 4), (18, 16)] {
        let spec = ConvSpec::random(2, 3, k, s, true, 0.5, &mut rng);
        let x = random(&[3, 3, 2], &mut rng);
        let up = random(&[3 * s, 3 * s, 3], &mut rng);
        let full = conv_transpose_vjp(&x, &spec, &up).unwrap();
        let gi = conv_transpose_input_vjp(&x, &spec, &up).unwrap();
        assert!(gi.sub(&full.input).unwrap().max_abs() < 1e-12);
    }
}

#[test]
fn vjps_vanish_for_zero_upstream_and_are_linear() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let spec = ConvSpec::random(2, 3, 5, 2, true, 0.5, &mut rng);
    let x = random(&[3, 3, 2], &mut rng);
    let zero = conv_transpose_vjp(&x, &spec, &Tensor::zeros(&[6, 6, 3])).unwrap();
    assert_eq!(zero.input.max_abs() + zero.weights.max_abs() + zero.bias.max_abs(), 0.0);
    let (u1, u2) = (random(&[6, 6, 3], &mut rng), random(&[6, 6, 3], &mut rng));
    let a = conv_transpose_vjp(&x, &spec, &u1.add(&u2).unwrap()).unwrap();
    let b1 = conv_transpose_vjp(&x, &spec, &u1).unwrap();
    let b2 = conv_transpose_vjp(&x, &spec, &u2).unwrap();
    assert!(a.input.sub(&b1.input.add(&b2.input).unwrap()).unwrap().max_abs() < 1e-12);
    assert!(a.weights.sub(&b1.weights.add(&b2.weights).unwrap()).unwrap().max_abs() < 1e-12);

    let ig = IgdnSpec::new(3, 0.2);
    let xi = away_from_zero(&[2, 2, 3], &mut rng);
    let z = igdn_vjp(&xi, &ig, &Tensor::zeros(&[2, 2, 3])).unwrap();
    assert_eq!(z.input.max_abs() + z.beta.max_abs() + z.gamma.max_abs(), 0.0);
    let (v1, v2) = (random(&[2, 2, 3], &mut rng), random(&[2, 2, 3], &mut rng));
    let a = igdn_vjp(&xi, &ig, &v1.add(&v2).unwrap()).unwrap();
    let b1 = igdn_vjp(&xi, &ig, &v1).unwrap();
    let b2 = igdn_vjp(&xi, &ig, &v2).unwrap();
    assert!(a.gamma.sub(&b1.gamma.add(&b2.gamma).unwrap()).unwrap().max_abs() < 1e-12);
}
