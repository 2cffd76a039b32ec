use ndarray::Array2;

use crate::error::{Error, Result};

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular filters with unit peaks, evenly spaced on the mel scale.
#[derive(Clone, Debug, PartialEq)]
pub struct MelFilterbank {
    weights: Array2<f64>,
    edges_hz: Vec<f64>,
}

impl MelFilterbank {
    pub fn new(n_mels: usize, fft_size: usize, sample_rate: f64, fmin: f64, fmax: f64) -> Result<Self> {
        if n_mels == 0 || !(0.0 <= fmin && fmin < fmax && fmax <= sample_rate / 2.0) {
            return Err(Error::Config(format!(
                "mel filterbank needs n_mels >= 1 and 0 <= fmin < fmax <= sr/2 (n_mels {n_mels}, fmin {fmin}, fmax {fmax}, sr {sample_rate})"
            )));
        }
        let bins = fft_size / 2 + 1;
        let (lo, hi) = (hz_to_mel(fmin), hz_to_mel(fmax));
        let edges_hz: Vec<f64> =
            (0..n_mels + 2).map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (n_mels + 1) as f64)).collect();
        let mut weights = Array2::zeros((n_mels, bins));
        for m in 0..n_mels {
            let (l, c, r) = (edges_hz[m], edges_hz[m + 1], edges_hz[m + 2]);
            for b in 0..bins {
                let f = b as f64 * sample_rate / fft_size as f64;
                let v = if f > l && f <= c {
                    (f - l) / (c - l)
                } else if f > c && f < r {
                    (r - f) / (r - c)
                } else {
                    0.0
                };
                weights[[m, b]] = v;
            }
        }
        Ok(MelFilterbank { weights, edges_hz })
    }

    /// `n_mels x (fft_size/2 + 1)`.
    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    pub fn edges_hz(&self) -> &[f64] {
        &self.edges_hz
    }

    pub fn n_mels(&self) -> usize {
        self.weights.nrows()
    }

    /// Non-negative `P` minimising `‖M P − Y‖²` by multiplicative updates,
    /// started from `Mᵀ Y`.
    pub fn invert_nnls(&self, mel_power: &Array2<f64>, iters: usize) -> Array2<f64> {
        let m = &self.weights;
        let mtm = m.t().dot(m);
        let mty = m.t().dot(mel_power);
        let mut p = mty.mapv(|v| v.max(0.0));
        for _ in 0..iters {
            let den = mtm.dot(&p);
            ndarray::Zip::from(&mut p).and(&mty).and(&den).for_each(|p, &n, &d| {
                *p = if d > 0.0 { *p * n.max(0.0) / d } else { 0.0 };
            });
        }
        p
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn default_bank() -> MelFilterbank {
        MelFilterbank::new(64, 1024, 10_500.0, 40.0, 5250.0).unwrap()
    }

    #[test]
    fn mel_scale_round_trips() {
        for f in [0.0, 40.0, 1000.0, 5250.0] {
            assert!((mel_to_hz(hz_to_mel(f)) - f).abs() < 1e-9);
        }
        assert!((hz_to_mel(700.0) - 2595.0 * 2f64.log10()).abs() < 1e-12);
    }

    #[test]
    fn rows_nonnegative_unimodal() {
        let fb = default_bank();
        for row in fb.weights().rows() {
            assert!(row.iter().all(|&v| v >= 0.0));
            let peak = row.iter().enumerate().fold((0, 0.0), |a, (i, &v)| if v > a.1 { (i, v) } else { a }).0;
            assert!(row.iter().any(|&v| v > 0.0));
            for i in 1..=peak {
                assert!(row[i] >= row[i - 1]);
            }
            for i in peak + 1..row.len() {
                assert!(row[i] <= row[i - 1]);
            }
        }
    }

    #[test]
    fn covers_passband() {
        let fb = default_bank();
        for b in 0..513 {
            let f = b as f64 * 10_500.0 / 1024.0;
            if f > 40.0 && f < 5250.0 {
                assert!(fb.weights().column(b).sum() > 0.0, "bin {b} ({f} Hz) uncovered");
            }
        }
    }

    #[test]
    fn full_row_rank() {
        // Cholesky of the Gram matrix succeeds iff rows are independent.
        let w = default_bank().weights().clone();
        let g = w.dot(&w.t());
        let n = g.nrows();
        let mut l = Array2::<f64>::zeros((n, n));
        for i in 0..n {
            for j in 0..=i {
                let s: f64 = (0..j).map(|k| l[[i, k]] * l[[j, k]]).sum();
                if i == j {
                    let d = g[[i, i]] - s;
                    assert!(d > 1e-10 * g[[i, i]], "rank deficient at row {i}");
                    l[[i, i]] = d.sqrt();
                } else {
                    l[[i, j]] = (g[[i, j]] - s) / l[[j, j]];
                }
            }
        }
    }

    #[test]
    fn nnls_inverse_is_consistent() {
        let fb = default_bank();
        let mut rng = crate::rng::seeded(2);
        let p = Array2::from_shape_simple_fn((513, 4), || crate::rng::uniform(&mut rng, 0.0, 1.0));
        let y = fb.weights().dot(&p);
        let q = fb.invert_nnls(&y, 50);
        assert!(q.iter().all(|&v| v >= 0.0));
        let rel = (&fb.weights().dot(&q) - &y).mapv(|v| v * v).sum().sqrt() / y.mapv(|v| v * v).sum().sqrt();
        assert!(rel < 0.1, "{rel}");
    }

    #[test]
    fn rejects_bad_range() {
        assert!(MelFilterbank::new(64, 1024, 10_500.0, 40.0, 6000.0).is_err());
        assert!(MelFilterbank::new(0, 1024, 10_500.0, 40.0, 5000.0).is_err());
    }
}
