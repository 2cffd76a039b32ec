//! Audio transforms: waveform to normalised mel-spectrogram, Griffin-Lim
//! recovery, fidelity metrics and 16-bit WAV I/O.

mod mel;
mod stft;
mod wav;

use ndarray::{Array2, ArrayView2};
use realfft::num_complex::Complex64;

pub use mel::{hz_to_mel, mel_to_hz, MelFilterbank};
pub use stft::{hann, Stft};
pub use wav::{read_wav, read_wav_expecting, write_wav};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Clone, Debug, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite sample at index {i}")));
        }
        Ok(Waveform { samples, sample_rate })
    }

    pub fn silence(len: usize, sample_rate: u32) -> Self {
        Waveform { samples: vec![0.0; len], sample_rate }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn crop(&self, start: usize, len: usize) -> Result<Waveform> {
        if start + len > self.len() {
            return Err(Error::InvalidInput(format!(
                "crop [{start}, {}) outside waveform of {} samples",
                start + len,
                self.len()
            )));
        }
        Ok(Waveform { samples: self.samples[start..start + len].to_vec(), sample_rate: self.sample_rate })
    }
}

/// Parameters of the waveform to mel-spectrogram map.
#[derive(Clone, Debug, PartialEq)]
pub struct MelConfig {
    pub sample_rate: u32,
    pub fft_size: usize,
    pub hop: usize,
    pub n_mels: usize,
    pub n_frames: usize,
    pub fmin: f64,
    /// Upper band edge; `None` means Nyquist.
    pub fmax: Option<f64>,
    /// Lower clamp in dB relative to `ref_db`.
    pub floor_db: f64,
    /// Level mapped to 1.0, normally the loudest mel bin of a corpus.
    pub ref_db: f64,
    pub crop_len: usize,
}

impl Default for MelConfig {
    fn default() -> Self {
        MelConfig {
            sample_rate: 10_500,
            fft_size: 1024,
            hop: 330,
            n_mels: 64,
            n_frames: 64,
            fmin: 40.0,
            fmax: None,
            floor_db: -80.0,
            ref_db: 40.0,
            crop_len: 21_000,
        }
    }
}

impl MelConfig {
    pub fn fmax(&self) -> f64 {
        self.fmax.unwrap_or(self.sample_rate as f64 / 2.0)
    }
}

/// `n_mels x n_frames` grid in `[0, 1]` with the config that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct MelSpectrogram {
    pub grid: Array2<f64>,
    pub config: MelConfig,
}

impl MelSpectrogram {
    pub fn new(grid: Array2<f64>, config: MelConfig) -> Result<Self> {
        if grid.dim() != (config.n_mels, config.n_frames) {
            return Err(Error::shape(
                "mel_spectrogram",
                format!("expected {}x{}, got {:?}", config.n_mels, config.n_frames, grid.dim()),
            ));
        }
        if let Some(v) = grid.iter().find(|v| !(**v >= 0.0 && **v <= 1.0)) {
            return Err(Error::InvalidInput(format!("spectrogram value {v} outside [0, 1]")));
        }
        Ok(MelSpectrogram { grid, config })
    }

    /// Level in dB for every cell, undoing the `[0, 1]` normalisation.
    pub fn to_db(&self) -> Array2<f64> {
        let c = &self.config;
        self.grid.mapv(|v| c.ref_db + c.floor_db * (1.0 - v))
    }

    pub fn to_power(&self) -> Array2<f64> {
        self.to_db().mapv(|db| 10f64.powf(db / 10.0))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GriffinLimConfig {
    pub iters: usize,
    pub nnls_iters: usize,
    pub momentum: f64,
    pub seed: u64,
    pub peak: f64,
}

impl Default for GriffinLimConfig {
    fn default() -> Self {
        GriffinLimConfig { iters: 64, nnls_iters: 50, momentum: 0.99, seed: 0, peak: 0.95 }
    }
}

/// Cached STFT plans and filterbank for one [`MelConfig`].
#[derive(Debug)]
pub struct MelAnalyzer {
    config: MelConfig,
    stft: Stft,
    bank: MelFilterbank,
}

impl MelAnalyzer {
    pub fn new(config: MelConfig) -> Result<Self> {
        let stft = Stft::new(config.fft_size, config.hop)?;
        if stft.num_frames(config.crop_len) < config.n_frames {
            return Err(Error::Config(format!(
                "crop of {} samples yields {} frames, fewer than {}",
                config.crop_len,
                stft.num_frames(config.crop_len),
                config.n_frames
            )));
        }
        let bank =
            MelFilterbank::new(config.n_mels, config.fft_size, config.sample_rate as f64, config.fmin, config.fmax())?;
        Ok(MelAnalyzer { config, stft, bank })
    }

    pub fn config(&self) -> &MelConfig {
        &self.config
    }

    pub fn filterbank(&self) -> &MelFilterbank {
        &self.bank
    }

    pub fn stft(&self) -> &Stft {
        &self.stft
    }

    /// Mel power of the first `n_frames` frames, before the log.
    pub fn mel_power(&self, a: &Waveform) -> Result<Array2<f64>> {
        if a.len() != self.config.crop_len {
            return Err(Error::InvalidInput(format!(
                "waveform has {} samples, expected exactly {}; crop or pad before analysis",
                a.len(),
                self.config.crop_len
            )));
        }
        let spec = self.stft.forward(&a.samples)?;
        let power = spec.slice(ndarray::s![.., ..self.config.n_frames]).mapv(|c| c.norm_sqr());
        Ok(self.bank.weights().dot(&power))
    }

    pub fn spectrogram(&self, a: &Waveform) -> Result<MelSpectrogram> {
        let c = &self.config;
        let grid = self.mel_power(a)?.mapv(|p| {
            let rel = (10.0 * (p + 1e-10).log10() - c.ref_db).clamp(c.floor_db, 0.0);
            (rel - c.floor_db) / -c.floor_db
        });
        MelSpectrogram::new(grid, c.clone())
    }

    /// Recovers a waveform of `crop_len` samples: mel power is mapped back
    /// to linear-frequency power by non-negative least squares, then phase
    /// is estimated with momentum-accelerated Griffin-Lim.
    pub fn griffin_lim(&self, s: &MelSpectrogram, gl: &GriffinLimConfig) -> Result<Waveform> {
        let c = &self.config;
        if s.grid.dim() != (c.n_mels, c.n_frames) {
            return Err(Error::shape("griffin_lim", format!("expected {}x{}, got {:?}", c.n_mels, c.n_frames, s.grid.dim())));
        }
        if s.grid.iter().all(|&v| v == 0.0) {
            return Ok(Waveform::silence(c.crop_len, c.sample_rate));
        }
        let linear = self.bank.invert_nnls(&s.to_power(), gl.nnls_iters);
        let frames = self.stft.num_frames(c.crop_len);
        // Frames past n_frames are unconstrained; leave them silent.
        let mut mag = Array2::zeros((self.stft.bins(), frames));
        mag.slice_mut(ndarray::s![.., ..c.n_frames]).assign(&linear.mapv(f64::sqrt));

        let mut rng = rng::seeded(gl.seed);
        let mut angles: Array2<Complex64> =
            Array2::from_shape_simple_fn(mag.raw_dim(), || Complex64::from_polar(1.0, rng::uniform(&mut rng, -std::f64::consts::PI, std::f64::consts::PI)));
        let mut prev: Array2<Complex64> = Array2::zeros(mag.raw_dim());
        let alpha = gl.momentum / (1.0 + gl.momentum);
        for _ in 0..gl.iters.max(1) {
            let spec = ndarray::Zip::from(&mag).and(&angles).map_collect(|&m, &a| a * m);
            let rebuilt = self.stft.forward(&self.stft.inverse(&spec, c.crop_len)?)?;
            ndarray::Zip::from(&mut angles).and(&rebuilt).and(&prev).for_each(|a, &r, &p| {
                let v = r - p * alpha;
                let n = v.norm();
                *a = if n > 1e-16 { v / n } else { Complex64::new(1.0, 0.0) };
            });
            prev = rebuilt;
        }
        let spec = ndarray::Zip::from(&mag).and(&angles).map_collect(|&m, &a| a * m);
        let mut samples = self.stft.inverse(&spec, c.crop_len)?;
        let peak = samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if peak > 0.0 {
            samples.iter_mut().for_each(|v| *v *= gl.peak / peak);
        }
        Waveform::new(samples, c.sample_rate)
    }
}

/// The analysis map from a `crop_len` waveform to a normalised grid.
pub fn mel_spectrogram(a: &Waveform, config: &MelConfig) -> Result<MelSpectrogram> {
    MelAnalyzer::new(config.clone())?.spectrogram(a)
}

pub fn griffin_lim(s: &MelSpectrogram, iters: usize) -> Result<Waveform> {
    MelAnalyzer::new(s.config.clone())?.griffin_lim(s, &GriffinLimConfig { iters, ..GriffinLimConfig::default() })
}

/// Pearson correlation over all cells of two equally shaped grids.
///
/// A constant grid against a varying one correlates at 0; two constant
/// grids are an error.
pub fn corr2d(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::shape("corr2d", format!("{:?} vs {:?}", a.dim(), b.dim())));
    }
    let n = a.len() as f64;
    let (ma, mb) = (a.sum() / n, b.sum() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b.iter()) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    match (saa > 0.0, sbb > 0.0) {
        (false, false) => Err(Error::InvalidInput("corr2d is undefined for two constant grids".into())),
        (true, true) => Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0)),
        _ => Ok(0.0),
    }
}

/// Root-mean-square difference in dB between two spectrograms.
pub fn log_spectral_distance(a: &MelSpectrogram, b: &MelSpectrogram) -> Result<f64> {
    if a.config != b.config {
        return Err(Error::InvalidInput("spectrograms were produced with different mel settings".into()));
    }
    let (da, db) = (a.to_db(), b.to_db());
    let ms = da.iter().zip(db.iter()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / da.len() as f64;
    Ok(ms.sqrt())
}

/// Gliding harmonic tone with a two-peak formant envelope, `crop_len`
/// samples long. `f0` is the mean pitch; `seed` places the formants.
pub fn harmonic_voice(f0: f64, seed: u64, config: &MelConfig) -> Waveform {
    use std::f64::consts::PI;
    let sr = config.sample_rate as f64;
    let mut r = rng::seeded(seed);
    let formants = [500.0 + 200.0 * rng::uniform(&mut r, 0.0, 1.0), 1500.0 + 500.0 * rng::uniform(&mut r, 0.0, 1.0)];
    let mut phase = vec![0.0; 30];
    let samples = (0..config.crop_len)
        .map(|i| {
            let t = i as f64 / sr;
            let f = f0 * (1.0 + 0.2 * (2.0 * PI * 0.7 * t).sin());
            let env = (PI * t / 2.0).sin().powi(2);
            let mut v = 0.0;
            for (h, ph) in phase.iter_mut().enumerate() {
                let fh = f * (h + 1) as f64;
                if fh >= sr / 2.0 {
                    break;
                }
                *ph += 2.0 * PI * fh / sr;
                let gain: f64 = formants.iter().map(|&c| (-((fh - c) / 150.0).powi(2)).exp()).sum::<f64>() + 0.02;
                v += gain * ph.sin();
            }
            0.1 * env * v
        })
        .collect();
    Waveform { samples, sample_rate: config.sample_rate }
}

#[cfg(test)]
mod tests;
