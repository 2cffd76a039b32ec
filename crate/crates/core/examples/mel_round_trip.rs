//! Mel-spectrogram of a synthetic utterance, inverted with Griffin-Lim and
//! re-analysed.
//!
//! Run with `cargo run --release --example mel_round_trip [out.wav]`.

use plastic_speech::dsp::{corr2d, log_spectral_distance, write_wav, GriffinLimConfig, MelAnalyzer, MelConfig};
use plastic_speech::train::{generate_synthetic_corpus, SyntheticCorpusSpec};

fn main() -> plastic_speech::Result<()> {
    let spec = SyntheticCorpusSpec { n_subjects: 1, repetitions: 1, width_range: (100, 120), ..Default::default() };
    let sample = generate_synthetic_corpus(&spec, 0)?.remove(0);
    let mel = MelConfig::default();
    let analyzer = MelAnalyzer::new(mel.clone())?;

    let audio = sample.audio.expect("generated samples keep their audio");
    let crop = audio.crop((audio.len() - mel.crop_len) / 2, mel.crop_len)?;
    let s = analyzer.spectrogram(&crop)?;

    let start = std::time::Instant::now();
    let rebuilt = analyzer.griffin_lim(&s, &GriffinLimConfig::default())?;
    let elapsed = start.elapsed();
    let again = analyzer.spectrogram(&rebuilt)?;

    println!("utterance {:?}, {} samples at {} Hz", sample.utterance_id, crop.len(), mel.sample_rate);
    println!("Griffin-Lim (64 iterations) took {elapsed:.2?}");
    println!("Corr2D {:.4}, LSD {:.3} dB", corr2d(s.grid.view(), again.grid.view())?, log_spectral_distance(&s, &again)?);
    if let Some(path) = std::env::args().nth(1) {
        write_wav(&path, &rebuilt)?;
        println!("wrote {path}");
    }
    Ok(())
}
