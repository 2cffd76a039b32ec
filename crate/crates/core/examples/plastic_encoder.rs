//! The encoder maps weighting maps of any width to the same `8x8x20` latent.
//!
//! Run with `cargo run --release --example plastic_encoder`.

use std::time::Instant;

use plastic_speech::model::{ModelConfig, Translator};
use plastic_speech::tensor::{Tape, Tensor};

fn main() -> plastic_speech::Result<()> {
    let cfg = ModelConfig::default();
    let (translator, params) = Translator::init::<f32>(&cfg, 0)?;
    println!("{} parameters, bias table {:?}", params.num_elements(), cfg.table_shape());
    for width in [100, 2_000, 5_745, 9_800, 11_938] {
        let h = Tensor::<f32>::from_fn(&[cfg.rows, width], |i| ((i * 37) % 101) as f32 / 101.0);
        let tape = Tape::new();
        let bound = params.bind_frozen(&tape);
        let start = Instant::now();
        let latent = translator.encode(&tape, &bound, &h)?;
        println!("20 x {width:>6} -> {:?} in {:.1?}", latent.shape(), start.elapsed());
    }
    let too_wide = Tensor::<f32>::zeros(&[cfg.rows, cfg.max_width + 1]);
    match translator.synthesize(&params, &too_wide) {
        Err(e) => println!("width {}: {e}", cfg.max_width + 1),
        Ok(_) => println!("width {} unexpectedly accepted", cfg.max_width + 1),
    }
    Ok(())
}
