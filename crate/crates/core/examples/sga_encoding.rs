//! One-shot rounding, iterative refinement and stochastic Gumbel annealing
//! against the same decoder, plus the annealing schedule.

use shallow_ntc::analysis::encode_cost;
use shallow_ntc::data::dead_leaves;
use shallow_ntc::encoder::{EncodeConfig, EncodeMode, TempSchedule};
use shallow_ntc::models::{Arch, Codec, ModelConfig};

fn main() {
    let s = TempSchedule::default();
    for t in [0, 200, 1000, 2000, 3000] {
        println!("tau({t:>4}) = {:.5}", s.tau(t));
    }
    let cfg = ModelConfig { arch: Arch::TwoLayer, channels: 16, analysis_layers: Some(1), ..ModelConfig::default() };
    let codec = Codec::random(&cfg, 2).unwrap();
    let x = dead_leaves(48, 48, 7);
    for (mode, steps) in [(EncodeMode::Oneshot, 0), (EncodeMode::Iterative, 500), (EncodeMode::Sga, 500)] {
        let enc = EncodeConfig { mode, steps, ..EncodeConfig::default() };
        let c = encode_cost(&x, &codec, &enc).unwrap();
        println!("{mode:<9} cost {:.4}  bpp {:.4}  mse {:.6}", c.cost, c.bpp, c.mse);
    }
}
