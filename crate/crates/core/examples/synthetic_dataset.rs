//! Writes a small synthetic training set and loads it back.

use shallow_ntc::data::{load_dir, write_dataset, SyntheticKind};

fn main() {
    let dir = std::env::temp_dir().join("shallow-ntc-dataset");
    for kind in [SyntheticKind::DeadLeaves, SyntheticKind::Blobs] {
        let sub = dir.join(kind.to_string());
        let files = write_dataset(&sub, kind, 4, 64, 0).unwrap();
        let images = load_dir(&sub).unwrap();
        let mean: f64 = images.iter().map(|i| i.pixels().data().iter().sum::<f64>() / i.pixels().len() as f64).sum::<f64>()
            / images.len() as f64;
        println!("{kind}: {} files in {}, mean level {mean:.1}", files.len(), sub.display());
    }
}
