use std::f64::consts::PI;

use ndarray::Array2;
use proptest::prelude::*;

use super::*;

fn harmonic_voice(f0: f64, seed: u64) -> Waveform {
    super::harmonic_voice(f0, seed, &MelConfig::default())
}

fn tone(freqs: &[f64]) -> Waveform {
    let cfg = MelConfig::default();
    let sr = cfg.sample_rate as f64;
    let s = (0..cfg.crop_len).map(|i| freqs.iter().map(|f| 0.3 * (2.0 * PI * f * i as f64 / sr).sin()).sum()).collect();
    Waveform::new(s, cfg.sample_rate).unwrap()
}

#[test]
fn output_is_64_by_64() {
    let s = mel_spectrogram(&harmonic_voice(120.0, 0), &MelConfig::default()).unwrap();
    assert_eq!(s.grid.dim(), (64, 64));
    assert!(s.grid.iter().all(|&v| (0.0..=1.0).contains(&v)));
}

#[test]
fn silence_maps_to_zero() {
    let s = mel_spectrogram(&Waveform::silence(21_000, 10_500), &MelConfig::default()).unwrap();
    assert!(s.grid.iter().all(|&v| v == 0.0));
}

#[test]
fn wrong_length_is_rejected() {
    let err = mel_spectrogram(&Waveform::silence(20_000, 10_500), &MelConfig::default()).unwrap_err();
    assert!(err.to_string().contains("crop"));
}

#[test]
fn two_tones_light_distinct_rows() {
    let cfg = MelConfig::default();
    let a = MelAnalyzer::new(cfg.clone()).unwrap();
    let s = a.spectrogram(&tone(&[100.0, 400.0])).unwrap();
    // Oracle: the filter with the largest response at each tone frequency.
    let best_row = |f: f64| {
        let bin = (f * cfg.fft_size as f64 / cfg.sample_rate as f64).round() as usize;
        let col = a.filterbank().weights().column(bin).to_vec();
        (0..64).max_by(|&i, &j| col[i].total_cmp(&col[j])).unwrap()
    };
    let (r1, r2) = (best_row(100.0), best_row(400.0));
    assert_ne!(r1, r2);
    let mean_row: Vec<f64> = s.grid.rows().into_iter().map(|r| r.mean().unwrap()).collect();
    let mut order: Vec<usize> = (0..64).collect();
    order.sort_by(|&i, &j| mean_row[j].total_cmp(&mean_row[i]));
    for r in [r1, r2] {
        assert!(mean_row[r] > 0.9 * mean_row[order[0]], "row {r} not dominant");
    }
}

#[test]
fn analysis_is_deterministic() {
    let w = harmonic_voice(150.0, 3);
    let a = mel_spectrogram(&w, &MelConfig::default()).unwrap();
    let b = mel_spectrogram(&w, &MelConfig::default()).unwrap();
    assert!(a.grid.iter().zip(b.grid.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
}

#[test]
fn griffin_lim_round_trip() {
    let an = MelAnalyzer::new(MelConfig::default()).unwrap();
    let mut scores = Vec::new();
    for (i, f0) in [110.0, 140.0, 180.0, 220.0].iter().enumerate() {
        let s = an.spectrogram(&harmonic_voice(*f0, i as u64)).unwrap();
        let y = an.griffin_lim(&s, &GriffinLimConfig::default()).unwrap();
        assert_eq!(y.len(), 21_000);
        assert!((y.peak() - 0.95).abs() < 1e-12);
        scores.push(corr2d(an.spectrogram(&y).unwrap().grid.view(), s.grid.view()).unwrap());
    }
    scores.sort_by(f64::total_cmp);
    assert!(scores[scores.len() / 2] >= 0.95, "{scores:?}");
}

#[test]
fn more_iterations_do_not_hurt() {
    let an = MelAnalyzer::new(MelConfig::default()).unwrap();
    let s = an.spectrogram(&harmonic_voice(130.0, 9)).unwrap();
    let score = |iters| {
        let y = an.griffin_lim(&s, &GriffinLimConfig { iters, ..GriffinLimConfig::default() }).unwrap();
        corr2d(an.spectrogram(&y).unwrap().grid.view(), s.grid.view()).unwrap()
    };
    assert!(score(64) >= score(1));
}

#[test]
fn griffin_lim_of_zero_is_silence() {
    let s = MelSpectrogram::new(Array2::zeros((64, 64)), MelConfig::default()).unwrap();
    let y = griffin_lim(&s, 64).unwrap();
    assert!(y.samples.iter().all(|&v| v == 0.0));
}

#[test]
fn corr2d_examples() {
    let x = Array2::from_shape_fn((4, 5), |(i, j)| ((i * 7 + j * 3) % 5) as f64);
    assert!((corr2d(x.view(), x.view()).unwrap() - 1.0).abs() < 1e-15);
    assert!((corr2d(x.view(), (-&x).view()).unwrap() + 1.0).abs() < 1e-15);
    assert!((corr2d(x.view(), (&x + 3.5).view()).unwrap() - 1.0).abs() < 1e-15);
    let c = Array2::from_elem((4, 5), 2.0);
    assert!(corr2d(c.view(), c.view()).is_err());
    assert!(corr2d(x.view(), Array2::zeros((5, 4)).view()).is_err());
}

#[test]
fn lsd_examples() {
    let cfg = MelConfig::default();
    let mut rng = rng::seeded(1);
    let a = Array2::from_shape_simple_fn((64, 64), || rng::uniform(&mut rng, 0.2, 0.8));
    let sa = MelSpectrogram::new(a.clone(), cfg.clone()).unwrap();
    assert_eq!(log_spectral_distance(&sa, &sa).unwrap(), 0.0);
    // +10 dB in power is +10/80 on the normalised grid.
    let sb = MelSpectrogram::new(&a + 10.0 / 80.0, cfg.clone()).unwrap();
    assert!((log_spectral_distance(&sa, &sb).unwrap() - 10.0).abs() < 1e-9);

    let b = Array2::from_shape_simple_fn((64, 64), || rng::uniform(&mut rng, 0.0, 1.0));
    let sb = MelSpectrogram::new(b.clone(), cfg.clone()).unwrap();
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        let dx = cfg.ref_db + cfg.floor_db * (1.0 - x);
        let dy = cfg.ref_db + cfg.floor_db * (1.0 - y);
        acc += (dx - dy).powi(2);
    }
    let oracle = (acc / 4096.0).sqrt();
    assert!((log_spectral_distance(&sa, &sb).unwrap() - oracle).abs() < 1e-9);
}

#[test]
fn spectrogram_validation() {
    assert!(MelSpectrogram::new(Array2::zeros((64, 63)), MelConfig::default()).is_err());
    assert!(MelSpectrogram::new(Array2::from_elem((64, 64), 1.5), MelConfig::default()).is_err());
    assert!(Waveform::new(vec![0.0, f64::INFINITY], 8000).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn corr2d_symmetric_and_affine_invariant(
        v in proptest::collection::vec(-5.0f64..5.0, 12),
        u in proptest::collection::vec(-5.0f64..5.0, 12),
        scale in 0.1f64..10.0,
        shift in -3.0f64..3.0,
    ) {
        let a = Array2::from_shape_vec((3, 4), v).unwrap();
        let b = Array2::from_shape_vec((3, 4), u).unwrap();
        if let (Ok(ab), Ok(ba)) = (corr2d(a.view(), b.view()), corr2d(b.view(), a.view())) {
            prop_assert!((ab - ba).abs() < 1e-12);
            prop_assert!((-1.0..=1.0).contains(&ab));
            let t = corr2d((&a * scale + shift).view(), b.view()).unwrap();
            prop_assert!((t - ab).abs() < 1e-9);
        }
    }
}
