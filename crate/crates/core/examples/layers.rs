//! The building blocks: strided transposed convolution, simplified inverse
//! GDN and their vector-Jacobian products.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use shallow_ntc::nn::{conv_transpose_forward, conv_transpose_vjp, igdn_forward, igdn_vjp, ConvSpec, IgdnSpec};
use shallow_ntc::Tensor;

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let layer = ConvSpec::random(4, 3, 18, 16, true, 0.1, &mut rng);
    let mut z = Tensor::zeros(&[2, 2, 4]);
    z.set3(0, 1, 2, 1.0);
    let y = conv_transpose_forward(&z, &layer).unwrap();
    println!("transposed conv {:?} -> {:?}, |y| max {:.4}", z.shape(), y.shape(), y.max_abs());
    let g = conv_transpose_vjp(&z, &layer, &y).unwrap();
    println!("vjp shapes: input {:?}, weights {:?}, bias {:?}", g.input.shape(), g.weights.shape(), g.bias.shape());

    let act = IgdnSpec::new(4, 0.1);
    let h = Tensor::from_vec(&[1, 1, 4], vec![-2.0, -0.5, 0.5, 2.0]).unwrap();
    let out = igdn_forward(&h, &act).unwrap();
    println!("igdn {:?} -> {:?}", h.data(), out.data());
    let gi = igdn_vjp(&h, &act, &Tensor::full(&[1, 1, 4], 1.0)).unwrap();
    println!("igdn input gradient {:?}", gi.input.data());
}
