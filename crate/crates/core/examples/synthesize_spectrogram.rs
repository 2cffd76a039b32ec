//! Weighting map to spectrogram to audio with a freshly trained model.
//!
//! Run with `cargo run --release --example synthesize_spectrogram [out_dir]`.
//! Writes `spec.pgm`, `target.pgm` and `speech.wav`.

use std::path::PathBuf;
use std::time::Instant;

use plastic_speech::dsp::{corr2d, write_wav, GriffinLimConfig, MelAnalyzer, MelConfig, MelSpectrogram};
use plastic_speech::io::write_pgm;
use plastic_speech::model::ModelConfig;
use plastic_speech::train::{generate_synthetic_corpus, grid_of, h_tensor, train, SyntheticCorpusSpec, TrainConfig};

fn main() -> plastic_speech::Result<()> {
    let out_dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "synth_out".into()));
    std::fs::create_dir_all(&out_dir)?;
    let spec = SyntheticCorpusSpec { n_subjects: 2, repetitions: 2, width_range: (800, 1200), ..Default::default() };
    let samples = generate_synthetic_corpus(&spec, 1)?;
    let idx: Vec<usize> = (0..samples.len()).collect();
    let config = TrainConfig { beta: 0.0, lambda_gan: 0.0, epochs: 80, ..TrainConfig::default() };
    let mel = MelConfig::default();
    let out = train::<f32>(&samples, &idx, &[], &ModelConfig::default(), &config, &mel)?;

    let sample = &samples[0];
    let start = Instant::now();
    let s = grid_of(&out.translator.synthesize(&out.params, &h_tensor::<f32>(&sample.h))?);
    println!("20 x {} -> {:?} in {:.1?}", sample.h.ncols(), s.dim(), start.elapsed());
    println!("Corr2D with the recorded spectrogram: {:.3}", corr2d(s.view(), sample.s.view())?);

    write_pgm(out_dir.join("spec.pgm"), &s, true)?;
    write_pgm(out_dir.join("target.pgm"), &sample.s, true)?;
    let spectrogram = MelSpectrogram::new(s.mapv(|v| v.clamp(0.0, 1.0)), mel.clone())?;
    let audio = MelAnalyzer::new(mel)?.griffin_lim(&spectrogram, &GriffinLimConfig::default())?;
    write_wav(out_dir.join("speech.wav"), &audio)?;
    println!("wrote {}", out_dir.display());
    Ok(())
}
