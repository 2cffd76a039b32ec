//! Fit the translator to 8 synthetic pairs with the MSE term alone.
//!
//! Run with `cargo run --release --example train_overfit [steps]`.

use plastic_speech::dsp::MelConfig;
use plastic_speech::model::ModelConfig;
use plastic_speech::train::{generate_synthetic_corpus, train, SyntheticCorpusSpec, TrainConfig};

fn main() -> plastic_speech::Result<()> {
    let steps: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(150);
    let spec = SyntheticCorpusSpec { n_subjects: 2, repetitions: 2, width_range: (1000, 1500), ..Default::default() };
    let samples = generate_synthetic_corpus(&spec, 0)?;
    let idx: Vec<usize> = (0..samples.len()).collect();
    // One batch of 8 per epoch, so epochs are steps.
    let config = TrainConfig { beta: 0.0, lambda_gan: 0.0, batch: 8, epochs: steps, ..TrainConfig::default() };
    let out = train::<f32>(&samples, &idx, &[], &ModelConfig::default(), &config, &MelConfig::default())?;
    for e in out.history.iter().filter(|e| e.epoch % 25 == 0 || e.epoch == 1) {
        println!("step {:>4}: mse {:>8.3}  train Corr2D {:.3}", e.epoch, e.mse, e.train_corr2d);
    }
    Ok(())
}
