//! Generate the paired synthetic corpus and write it as a manifest of
//! `H` containers and WAV files, the layout the `train` command reads.
//!
//! Run with `cargo run --release --example synthetic_corpus [out_dir]`.

use std::path::PathBuf;

use plastic_speech::dsp::write_wav;
use plastic_speech::io::{write_manifest, write_matrix, ManifestRecord};
use plastic_speech::train::{generate_synthetic_corpus_with, SyntheticCorpusSpec};

fn main() -> plastic_speech::Result<()> {
    let out_dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "corpus_out".into()));
    let spec = SyntheticCorpusSpec { repetitions: 2, width_range: (400, 600), ..Default::default() };
    let samples = generate_synthetic_corpus_with(&spec, 0, |done, total| {
        if done % 6 == 0 || done == total {
            println!("{done}/{total}");
        }
    })?;
    std::fs::create_dir_all(out_dir.join("h"))?;
    std::fs::create_dir_all(out_dir.join("wav"))?;
    let mut records = Vec::new();
    for (i, s) in samples.iter().enumerate() {
        let h_path = out_dir.join("h").join(format!("{i:04}.nmfh"));
        let wav_path = out_dir.join("wav").join(format!("{i:04}.wav"));
        write_matrix(&h_path, &s.h)?;
        write_wav(&wav_path, s.audio.as_ref().expect("audio is kept"))?;
        records.push(ManifestRecord { subject_id: s.subject_id.clone(), utterance_id: s.utterance_id.clone(), h_path, wav_path });
    }
    write_manifest(&out_dir.join("manifest.csv"), &records)?;
    let widths: Vec<usize> = samples.iter().map(|s| s.h.ncols()).collect();
    println!(
        "{} samples, {} subjects, widths {}..{}; manifest at {}",
        samples.len(),
        spec.n_subjects,
        widths.iter().min().unwrap(),
        widths.iter().max().unwrap(),
        out_dir.join("manifest.csv").display()
    );
    Ok(())
}
