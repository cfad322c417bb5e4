//! The binary's commands, exit codes and JSON output.

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use shallow_ntc::data::dead_leaves;
use shallow_ntc::image::save_image;

const BIN: &str = env!("CARGO_BIN_EXE_shallow-ntc");

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN).current_dir(dir).args(args).output().unwrap()
}

fn lines(out: &Output) -> Vec<Value> {
    String::from_utf8_lossy(&out.stdout)
        .lines()
        .map(|l| serde_json::from_str(l).unwrap_or_else(|e| panic!("{l:?}: {e}")))
        .collect()
}

fn last(out: &Output) -> Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    lines(out).pop().unwrap()
}

/// Trains a tiny model once per test directory.
fn tiny_model(dir: &Path) {
    let out = run(
        dir,
        &[
            "train", "--synthetic", "dead-leaves", "--count", "8", "--image-size", "64", "--channels", "8",
            "--filters", "8", "--batch-size", "2", "--patch-size", "32", "--steps", "30", "--log-every", "10",
            "--lr-initial", "1e-3", "--out", "m.ckpt",
        ],
    );
    let v = last(&out);
    assert_eq!(v["steps"], 30);
    assert!(dir.join("m.ckpt").exists() && dir.join("m.ckpt.csv").exists());
}

#[test]
fn flops_reports_table_one_shapes() {
    let dir = tempfile::tempdir().unwrap();
    let a = last(&run(dir.path(), &["flops"]));
    assert_eq!(a["kmac_per_pixel"].as_f64().unwrap(), 1.215);
    let b = last(&run(dir.path(), &["flops", "--arch", "two-layer"]));
    assert_eq!(b["kmac_per_pixel"].as_f64().unwrap(), 5.295);
    let first = &lines(&run(dir.path(), &["flops"]))[0];
    assert_eq!(first["event"], "config");
}

#[test]
fn encode_decode_roundtrip_and_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    tiny_model(d);
    save_image(&dead_leaves(40, 40, 9), d.join("x.ppm")).unwrap();

    let enc = last(&run(d, &["encode", "--input", "x.ppm", "--checkpoint", "m.ckpt", "--out", "x.shbs"]));
    let dec = run(d, &["decode", "--input", "x.shbs", "--checkpoint", "m.ckpt", "--out", "y.ppm"]);
    assert_eq!(last(&dec)["height"], 40);
    let ev = last(&run(d, &["eval", "--reference", "x.ppm", "--decoded", "y.ppm"]));
    assert_eq!(ev["psnr"].as_f64(), enc["psnr"].as_f64());

    // SGA without steps produces the one-shot stream
    run(d, &["encode", "--input", "x.ppm", "--checkpoint", "m.ckpt", "--out", "s.shbs", "--mode", "sga", "--steps", "0"]);
    assert_eq!(std::fs::read(d.join("x.shbs")).unwrap(), std::fs::read(d.join("s.shbs")).unwrap());

    let missing = run(d, &["decode", "--input", "x.shbs", "--checkpoint", "nope.ckpt", "--out", "z.ppm"]);
    assert_eq!(missing.status.code(), Some(2));
    run(d, &["train", "--synthetic", "blobs", "--count", "4", "--image-size", "32", "--channels", "8",
        "--filters", "8", "--batch-size", "2", "--patch-size", "32", "--steps", "2", "--out", "other.ckpt"]);
    let wrong = run(d, &["decode", "--input", "x.shbs", "--checkpoint", "other.ckpt", "--out", "z.ppm"]);
    assert_eq!(wrong.status.code(), Some(3));
    let usage = run(d, &["encode", "--input", "x.ppm"]);
    assert_eq!(usage.status.code(), Some(1));
}

#[test]
fn config_files_merge_under_flags() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("f.cfg"), "# flops settings\narch = two-layer\nN = 12\nheight = 512\n").unwrap();
    let v = last(&run(d, &["--config", "f.cfg", "flops", "--height", "256"]));
    assert_eq!(v["arch"], "two-layer");
    assert_eq!(v["height"], 256);
    std::fs::write(d.join("bad.cfg"), "colour = blue\n").unwrap();
    assert_eq!(run(d, &["--config", "bad.cfg", "flops"]).status.code(), Some(1));
}

#[test]
fn identical_curves_have_zero_bd_rate() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let csv = "label,bpp,psnr\na,0.1,28\na,0.2,30.5\na,0.4,33\na,0.8,35.5\n";
    std::fs::write(d.join("a.csv"), csv).unwrap();
    let v = last(&run(d, &["eval", "--bd", "a.csv", "a.csv"]));
    assert_eq!(v["bd_rate"], "0.00%");
}

#[test]
fn traversal_and_probe() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    tiny_model(d);
    save_image(&dead_leaves(40, 40, 9), d.join("x.ppm")).unwrap();
    let same = last(&run(d, &["traverse", "--checkpoint", "m.ckpt", "--x0", "x.ppm", "--x1", "x.ppm", "--steps", "10"]));
    assert_eq!(same["eta"].as_f64(), Some(1.0));

    std::fs::create_dir(d.join("imgs")).unwrap();
    for i in 0..2 {
        save_image(&dead_leaves(32, 32, 100 + i), d.join(format!("imgs/{i}.ppm"))).unwrap();
    }
    let t = last(&run(d, &["traverse", "--checkpoint", "m.ckpt", "--images", "imgs", "--pairs", "3", "--steps", "20"]));
    assert!((t["eta_median"].as_f64().unwrap() - 1.0).abs() < 1e-9);
    let p = run(d, &["--jobs", "2", "probe", "--checkpoint", "m.ckpt", "--images", "imgs", "--steps", "50", "--out", "p.csv"]);
    let rows = lines(&p);
    assert!(p.status.success());
    assert_eq!(rows.len(), 1 + 2 + 1);
    assert!(std::fs::read_to_string(d.join("p.csv")).unwrap().starts_with("image,cost_oneshot"));
}
