//! The command-line pipeline end to end, driven in-process: generate a
//! corpus, train, evaluate, synthesize and plot. Each step prints the same
//! `key=value` summary line the `plastic-speech` binary does.
//!
//! Run with `cargo run --release --example cli_pipeline [work_dir]`.

use std::path::PathBuf;

use plastic_speech::commands::main_with_args;

fn run(args: &[&str]) {
    let mut full = vec!["plastic-speech"];
    full.extend_from_slice(args);
    let code = main_with_args(full);
    assert_eq!(code, 0, "{args:?} exited with {code}");
}

fn main() -> std::io::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "pipeline_out".into()));
    std::fs::create_dir_all(&dir)?;
    let config = dir.join("project.ini");
    std::fs::write(
        &config,
        "[train]\nepochs = 5\nbatch = 4\nlr_t = 0.003\n\n[corpus]\nn_subjects = 2\nrepetitions = 2\nwidth_range = 300,400\n",
    )?;
    let p = |name: &str| dir.join(name).to_string_lossy().into_owned();
    let (cfg, corpus, run_dir) = (p("project.ini"), p("corpus"), p("run"));
    let manifest = p("corpus/manifest.csv");
    let log = p("pipeline.log");

    run(&["--log-file", &log, "gen-corpus", "--spec", &cfg, "--out-dir", &corpus]);
    run(&["--log-file", &log, "train", "--config", &cfg, "--corpus", &manifest, "--out-dir", &run_dir]);
    run(&["--log-file", &log, "eval", "--config", &cfg, "--checkpoint", &p("run/model.pltc"), "--corpus", &manifest, "--metrics", &p("metrics.csv")]);
    run(&[
        "--log-file", &log, "synthesize", "--config", &cfg, "--h", &p("corpus/h/0000.nmfh"), "--checkpoint", &p("run/model.pltc"),
        "--out", &p("spec.nmfh"), "--plot", &p("spec.pgm"), "--wav", &p("speech.wav"),
    ]);
    run(&["--log-file", &log, "plot", "--input", &p("run/train_log.csv"), "--column", "loss_mse", "--out", &p("loss.pgm")]);
    Ok(())
}
