//! Load a project config, override a few settings and print the result.
//!
//! Run with `cargo run --example project_config [config.ini]`.

use std::path::Path;

use plastic_speech::io::ProjectConfig;

const EXAMPLE: &str = "\
[train]
epochs = 20
batch = 4
lr_t = 0.003

[corpus]
repetitions = 2
width_range = 400,600

[paths]
corpus = corpus/manifest.csv
out_dir = runs/first
";

fn main() -> plastic_speech::Result<()> {
    let cfg = match std::env::args().nth(1) {
        Some(p) => ProjectConfig::load(Path::new(&p))?,
        None => ProjectConfig::parse_str(EXAMPLE, Path::new("/experiments"))?,
    };
    println!("corpus manifest: {:?}", cfg.paths.corpus);
    println!("{}", cfg.to_ini_string());
    match ProjectConfig::parse_str("[train]\nlearning_rate = 1\n", Path::new(".")) {
        Err(e) => println!("rejected: {e}"),
        Ok(_) => println!("unknown key unexpectedly accepted"),
    }
    Ok(())
}
