use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::Array2;
use realfft::num_complex::Complex64;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};

use crate::error::{Error, Result};

/// Periodic Hann window.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos()).collect()
}

/// Short-time Fourier transform with Hann windows and centred,
/// reflect-padded frames. Holds reusable FFT plans.
pub struct Stft {
    fft_size: usize,
    hop: usize,
    window: Vec<f64>,
    r2c: Arc<dyn RealToComplex<f64>>,
    c2r: Arc<dyn ComplexToReal<f64>>,
}

impl std::fmt::Debug for Stft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Stft").field("fft_size", &self.fft_size).field("hop", &self.hop).finish()
    }
}

impl Stft {
    pub fn new(fft_size: usize, hop: usize) -> Result<Self> {
        if !fft_size.is_power_of_two() || fft_size < 2 {
            return Err(Error::InvalidInput(format!("fft_size must be a power of two, got {fft_size}")));
        }
        if hop == 0 {
            return Err(Error::InvalidInput("hop must be > 0".into()));
        }
        let mut planner = RealFftPlanner::new();
        Ok(Stft {
            fft_size,
            hop,
            window: hann(fft_size),
            r2c: planner.plan_fft_forward(fft_size),
            c2r: planner.plan_fft_inverse(fft_size),
        })
    }

    pub fn fft_size(&self) -> usize {
        self.fft_size
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    pub fn bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    pub fn window(&self) -> &[f64] {
        &self.window
    }

    pub fn num_frames(&self, len: usize) -> usize {
        1 + len / self.hop
    }

    fn padded(&self, x: &[f64]) -> Result<Vec<f64>> {
        let pad = self.fft_size / 2;
        if x.len() <= pad {
            return Err(Error::InvalidInput(format!(
                "waveform of {} samples is too short for fft_size {}",
                x.len(),
                self.fft_size
            )));
        }
        let n = x.len();
        let mut out = Vec::with_capacity(n + 2 * pad);
        out.extend((1..=pad).rev().map(|i| x[i]));
        out.extend_from_slice(x);
        out.extend((1..=pad).map(|i| x[n - 1 - i]));
        Ok(out)
    }

    /// Complex spectrogram, `(fft_size/2 + 1) x n_frames`.
    pub fn forward(&self, x: &[f64]) -> Result<Array2<Complex64>> {
        let padded = self.padded(x)?;
        let frames = self.num_frames(x.len());
        let mut out = Array2::zeros((self.bins(), frames));
        let mut buf = self.r2c.make_input_vec();
        let mut spec = self.r2c.make_output_vec();
        for t in 0..frames {
            let start = t * self.hop;
            for (b, (s, w)) in buf.iter_mut().zip(padded[start..start + self.fft_size].iter().zip(&self.window)) {
                *b = s * w;
            }
            self.r2c.process(&mut buf, &mut spec).expect("fft buffer sizes");
            out.column_mut(t).iter_mut().zip(&spec).for_each(|(o, s)| *o = *s);
        }
        Ok(out)
    }

    /// Weighted overlap-add inverse producing `len` samples.
    pub fn inverse(&self, spec: &Array2<Complex64>, len: usize) -> Result<Vec<f64>> {
        if spec.nrows() != self.bins() {
            return Err(Error::shape("istft", format!("expected {} bins, got {}", self.bins(), spec.nrows())));
        }
        let pad = self.fft_size / 2;
        let total = (spec.ncols() - 1) * self.hop + self.fft_size;
        let mut acc = vec![0.0; total.max(len + 2 * pad)];
        let mut norm = vec![0.0; acc.len()];
        let mut buf = self.c2r.make_input_vec();
        let mut frame = self.c2r.make_output_vec();
        let scale = 1.0 / self.fft_size as f64;
        for (t, col) in spec.columns().into_iter().enumerate() {
            buf.iter_mut().zip(col).for_each(|(b, c)| *b = *c);
            buf[0].im = 0.0;
            buf[self.bins() - 1].im = 0.0;
            self.c2r.process(&mut buf, &mut frame).expect("ifft buffer sizes");
            let start = t * self.hop;
            for (i, (&v, &w)) in frame.iter().zip(&self.window).enumerate() {
                acc[start + i] += v * scale * w;
                norm[start + i] += w * w;
            }
        }
        Ok((0..len)
            .map(|i| {
                let n = norm[i + pad];
                if n > 1e-10 {
                    acc[i + pad] / n
                } else {
                    0.0
                }
            })
            .collect())
    }
}
