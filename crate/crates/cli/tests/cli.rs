use std::path::Path;
use std::process::{Command, Output};

use cwmi::io::{read_tensor, write_pgm, TensorData};
use ndarray::Array2;
use serde_json::Value;

fn cwmi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cwmi")).args(args).output().expect("binary runs")
}

fn json(out: &Output) -> Vec<Value> {
    String::from_utf8(out.stdout.clone())
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).expect("one JSON value per line"))
        .collect()
}

fn disc_mask(dir: &Path, name: &str, size: usize, radius: f64) -> String {
    let c = size as f64 / 2.0;
    let mask = Array2::from_shape_fn((size, size), |(i, j)| {
        if radius > 0.0 && (i as f64 - c).powi(2) + (j as f64 - c).powi(2) <= radius * radius { 1.0 } else { 0.0 }
    });
    let path = dir.join(name);
    write_pgm(&path, &mask, 255).unwrap();
    path.to_str().unwrap().to_string()
}

fn blurry(dir: &Path, name: &str, size: usize) -> String {
    let c = size as f64 / 2.0;
    let img = Array2::from_shape_fn((size, size), |(i, j)| {
        let r = ((i as f64 - c).powi(2) + (j as f64 - c).powi(2)).sqrt();
        (1.0 / (1.0 + ((r - 10.0) / 2.0).exp())).clamp(0.0, 1.0)
    });
    let path = dir.join(name);
    write_pgm(&path, &img, 255).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn loss_at_lambda_one_is_cross_entropy() {
    let dir = tempfile::tempdir().unwrap();
    let label = disc_mask(dir.path(), "y.pgm", 32, 9.0);
    let out = cwmi(&["loss", "--label", &label, "--pred", &label, "--lambda", "1"]);
    assert!(out.status.success());
    let v = &json(&out)[0];
    let ce = v["ce_term"].as_f64().unwrap();
    assert!(ce <= 1.1e-7);
    assert_eq!(v["total"].as_f64().unwrap(), ce);
    assert_eq!(v["per_level"].as_array().unwrap().len(), 4);
}

#[test]
fn loss_writes_a_gradient_tensor() {
    let dir = tempfile::tempdir().unwrap();
    let label = disc_mask(dir.path(), "y.pgm", 32, 9.0);
    let pred = blurry(dir.path(), "p.pgm", 32);
    let grad = dir.path().join("g.cwtn");
    let out = cwmi(&[
        "loss", "--label", &label, "--pred", &pred, "--variant", "cwmi_real", "--levels", "3", "--orients", "2",
        "--grad", grad.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = &json(&out)[0];
    assert_eq!(v["variant"], "cwmi_real");
    let per_level: Vec<f64> = v["per_level"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    let total = 0.9 * per_level.iter().sum::<f64>() + 0.1 * v["ce_term"].as_f64().unwrap();
    assert!((total - v["total"].as_f64().unwrap()).abs() < 1e-12 * total.abs());
    let TensorData::Real(g) = read_tensor(&grad).unwrap() else { panic!("real gradient expected") };
    assert_eq!(g.shape(), &[32, 32]);
}

#[test]
fn metrics_on_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let label = disc_mask(dir.path(), "y.pgm", 16, 5.0);
    let out = cwmi(&["metrics", "--label", &label, "--pred", &label]);
    assert!(out.status.success());
    assert_eq!(
        String::from_utf8(out.stdout).unwrap().trim(),
        r#"{"ari":1.0,"hd":0.0,"mdice":1.0,"miou":1.0,"vi":0.0}"#
    );
}

#[test]
fn metrics_without_prediction_foreground_reports_null_distance() {
    let dir = tempfile::tempdir().unwrap();
    let label = disc_mask(dir.path(), "y.pgm", 16, 5.0);
    let empty = disc_mask(dir.path(), "e.pgm", 16, -1.0);
    let out = cwmi(&["metrics", "--label", &label, "--pred", &empty]);
    assert!(out.status.success());
    assert!(json(&out)[0]["hd"].is_null());
}

#[test]
fn decompose_writes_every_subband() {
    let dir = tempfile::tempdir().unwrap();
    let input = blurry(dir.path(), "x.pgm", 32);
    let out_dir = dir.path().join("dec");
    let out = cwmi(&["decompose", "--input", &input, "--levels", "3", "--orients", "4", "--out-dir", out_dir.to_str().unwrap()]);
    assert!(out.status.success());
    assert_eq!(json(&out)[0]["subbands"], 3 * 4 + 2);
    let names: Vec<_> = std::fs::read_dir(&out_dir).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(names.len(), 2 * (3 * 4 + 2));
    let TensorData::Complex(band) = read_tensor(out_dir.join("band_l2_o3.cwtn")).unwrap() else { panic!("complex band expected") };
    assert_eq!(band.shape(), &[16, 16]);
    let TensorData::Real(low) = read_tensor(out_dir.join("low_residue.cwtn")).unwrap() else { panic!("real residue expected") };
    assert_eq!(low.shape(), &[8, 8]);

    let real_dir = dir.path().join("real");
    let out = cwmi(&["decompose", "--input", &input, "--levels", "2", "--mode", "real", "--out-dir", real_dir.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(matches!(read_tensor(real_dir.join("band_l1_o1.cwtn")).unwrap(), TensorData::Real(_)));
}

#[test]
fn gradcheck_passes_and_is_stable() {
    let args = ["gradcheck", "--variant", "cwmi", "--size", "32", "--levels", "2", "--orients", "2", "--probes", "20", "--seed", "3"];
    let a = cwmi(&args);
    assert!(a.status.success());
    let v = &json(&a)[0];
    assert_eq!(v["passed"], true);
    assert!(v["max_relative_error"].as_f64().unwrap() <= 1e-5);
    assert_eq!(a.stdout, cwmi(&args).stdout);
}

#[test]
fn traindemo_writes_history_and_prediction() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("run");
    let args = ["traindemo", "--size", "32", "--levels", "3", "--steps", "30", "--eval-every", "10", "--out-dir", out_dir.to_str().unwrap()];
    let out = cwmi(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let history = std::fs::read_to_string(out_dir.join("history.jsonl")).unwrap();
    let lines: Vec<Value> = history.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 30 + 3 + 1);
    assert_eq!(lines[0]["step"], 1);
    assert!(lines[30]["evaluation"]["metrics"]["miou"].is_number());
    let prediction = cwmi::io::read_pgm(out_dir.join("prediction.pgm")).unwrap();
    assert_eq!(prediction.dim(), (32, 32));
    let again = cwmi(&args);
    assert_eq!(out.stdout, again.stdout);
}

#[test]
fn bench_reports_sizes_and_ratios() {
    let out = cwmi(&["bench", "--sizes", "32,64", "--repeats", "2", "--levels", "3"]);
    assert!(out.status.success());
    let lines = json(&out);
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[0]["size"], 32);
    assert_eq!(lines[2]["from"], 32);
    assert!(lines[2]["ratio"].as_f64().unwrap() > 0.0);
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(cwmi(&[]).status.code(), Some(2));
    assert_eq!(cwmi(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(cwmi(&["loss", "--label", "a", "--pred", "b", "--bogus"]).status.code(), Some(2));
    assert_eq!(cwmi(&["loss", "--label", "a", "--pred", "b", "--variant", "dice"]).status.code(), Some(2));
    assert_eq!(cwmi(&["--help"]).status.code(), Some(0));
}

#[test]
fn runtime_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let label = disc_mask(dir.path(), "y.pgm", 24, 5.0);
    assert_eq!(cwmi(&["loss", "--label", "missing.pgm", "--pred", &label]).status.code(), Some(1));
    let out = cwmi(&["loss", "--label", &label, "--pred", &label]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("divisible"));
    assert_eq!(cwmi(&["loss", "--label", &label, "--pred", &label, "--levels", "3", "--lambda", "2"]).status.code(), Some(1));
}
