//! Subject-independent leave-one-out on a small synthetic corpus, comparing
//! the full objective, MSE alone and a permuted-target baseline.
//!
//! Run with `cargo run --release --example leave_one_out [epochs]`. Takes a
//! few minutes.

use plastic_speech::model::ModelConfig;
use plastic_speech::train::{generate_synthetic_corpus, leave_one_out, summarize, SyntheticCorpusSpec, Targets, TrainConfig};

fn main() -> plastic_speech::Result<()> {
    let epochs: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(20);
    let spec = SyntheticCorpusSpec { repetitions: 2, width_range: (400, 600), ..Default::default() };
    let samples = generate_synthetic_corpus(&spec, 7)?;
    let base = TrainConfig { epochs, batch: 4, lr_t: 3e-3, ..TrainConfig::default() };
    let runs = [
        ("full", base.clone(), Targets::Paired),
        ("mse only", TrainConfig { beta: 0.0, lambda_gan: 0.0, ..base.clone() }, Targets::Paired),
        ("permuted", TrainConfig { beta: 0.0, lambda_gan: 0.0, ..base }, Targets::Permuted),
    ];
    for (name, config, targets) in runs {
        let r = leave_one_out::<f32>(&samples, &ModelConfig::default(), &config, &[0], targets, &spec.mel)?;
        let s = summarize(&r.rows);
        println!("{name:>9}: held-out Corr2D {:.3} (sd over samples {:.3}), LSD {:.2} dB", s.mean_corr2d, s.std_over_samples, s.mean_lsd);
    }
    Ok(())
}
