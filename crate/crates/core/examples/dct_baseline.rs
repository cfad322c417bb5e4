//! The frozen block-DCT codec: quantizer step search and prior training.

use shallow_ntc::analysis::dct::dct_baseline_cost;
use shallow_ntc::analysis::fit_dct_baseline;
use shallow_ntc::data::dead_leaves;
use shallow_ntc::trainer::TrainConfig;

fn main() {
    let images: Vec<_> = (0..16).map(|i| dead_leaves(64, 64, i)).collect();
    let cfg = TrainConfig { steps: 100, batch_size: 4, lr_initial: 1e-3, lr_final: 1e-4, log_every: 50, ..TrainConfig::default() };
    let steps: Vec<f64> = (0..6).map(|i| 0.08 * 1.3f64.powi(i)).collect();
    let base = fit_dct_baseline(&images, &cfg, &steps).unwrap();
    for (d, c) in &base.search {
        println!("step {d:.3}: mean one-shot cost {c:.4}");
    }
    println!("chosen step {:.3}", base.delta);
    let x = dead_leaves(64, 64, 999);
    let c = dct_baseline_cost(&x, &base, cfg.lambda).unwrap();
    println!("held-out image: cost {:.4}, bpp {:.4}, mse {:.6}", c.cost, c.bpp, c.mse);
}
