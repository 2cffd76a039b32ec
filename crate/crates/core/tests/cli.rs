//! The `plastic-speech` binary: exit codes, output files and their shapes.

use std::path::Path;
use std::process::{Command, Output};

use ndarray::Array2;
use plastic_speech::io::{read_matrix, write_matrix};

const BIN: &str = env!("CARGO_BIN_EXE_plastic-speech");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env("RUST_LOG", "error").output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Generates a tiny corpus and trains one epoch on it; returns the config,
/// manifest and checkpoint paths.
fn trained(dir: &Path) -> (String, String, String) {
    let cfg = dir.join("project.ini");
    std::fs::write(&cfg, "[train]\nepochs = 1\nbatch = 2\n\n[corpus]\nn_subjects = 2\nrepetitions = 1\nwidth_range = 60,80\n").unwrap();
    let corpus = dir.join("corpus");
    let out = run(&["gen-corpus", "--spec", s(&cfg), "--out-dir", s(&corpus)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let manifest = corpus.join("manifest.csv");
    let run_dir = dir.join("run");
    let out = run(&["train", "--config", s(&cfg), "--corpus", s(&manifest), "--out-dir", s(&run_dir)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    (s(&cfg).to_string(), s(&manifest).to_string(), s(&run_dir.join("model.pltc")).to_string())
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&run(&["factorize", "--input", "x.nmfh", "--rank", "0", "--out-dir", "o"])), 1);
    assert_eq!(code(&run(&["no-such-command"])), 1);
    assert_eq!(code(&run(&["--help"])), 0);
}

#[test]
fn malformed_container_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.nmfh");
    std::fs::write(&bad, b"not a matrix").unwrap();
    let out = run(&["factorize", "--input", s(&bad), "--rank", "2", "--out-dir", s(dir.path())]);
    assert_eq!(code(&out), 2);
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
}

#[test]
fn factorize_writes_factors_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let x = Array2::from_shape_fn((6, 30), |(i, j)| 1.0 + ((i * 7 + j * 3) % 11) as f64 / 11.0);
    let input = dir.path().join("x.nmfh");
    write_matrix(&input, &x).unwrap();
    let out_dir = dir.path().join("f");
    let out = run(&["factorize", "--input", s(&input), "--rank", "3", "--max-iters", "25", "--out-dir", s(&out_dir)]);
    assert_eq!(code(&out), 0);
    assert_eq!(read_matrix(out_dir.join("W.nmfh")).unwrap().dim(), (6, 3));
    assert_eq!(read_matrix(out_dir.join("H.nmfh")).unwrap().dim(), (3, 30));
    let trace = std::fs::read_to_string(out_dir.join("trace.csv")).unwrap();
    let rows: Vec<f64> = trace.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert!(!rows.is_empty() && rows.len() <= 25);
    assert!(rows.windows(2).all(|p| p[1] <= p[0] * (1.0 + 1e-9)));
}

#[test]
fn pipeline_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, manifest, ckpt) = trained(dir.path());

    let metrics = dir.path().join("metrics.csv");
    let out = run(&["eval", "--config", &cfg, "--checkpoint", &ckpt, "--corpus", &manifest, "--metrics", s(&metrics)]);
    assert_eq!(code(&out), 0);
    let text = std::fs::read_to_string(&metrics).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "sample,subject_id,utterance_id,corr2d,lsd");
    let n_samples = std::fs::read_to_string(&manifest).unwrap().lines().count() - 1;
    assert_eq!(lines.count(), n_samples);

    let h = dir.path().join("corpus/h/0000.nmfh");
    let spec = dir.path().join("spec.nmfh");
    let pgm = dir.path().join("spec.pgm");
    let out = run(&["synthesize", "--config", &cfg, "--h", s(&h), "--checkpoint", &ckpt, "--out", s(&spec), "--plot", s(&pgm)]);
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stdout).contains("inference_ms="));
    assert_eq!(read_matrix(&spec).unwrap().dim(), (64, 64));
    let img = std::fs::read(&pgm).unwrap();
    assert!(img.starts_with(b"P5"));

    // A weighting map wider than the model accepts is an input error.
    let wide = dir.path().join("wide.nmfh");
    write_matrix(&wide, &Array2::from_elem((20, 12_001), 0.5)).unwrap();
    let out = run(&["synthesize", "--config", &cfg, "--h", s(&wide), "--checkpoint", &ckpt, "--out", s(&spec)]);
    assert_eq!(code(&out), 2);
}

#[test]
fn gradcheck_ops_passes() {
    let out = run(&["gradcheck", "--scope", "ops", "--instances", "1"]);
    assert_eq!(code(&out), 0);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("failed=0"), "{stdout}");
}
