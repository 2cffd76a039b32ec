use ndarray::{Array2, Axis};
use rand::seq::index::sample;

use crate::dsp::Waveform;
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Drops `width mod 100` random columns, keeping the order of the rest, so
/// the width becomes the hundred at or below it.
pub fn augment_h(h: &Array2<f64>, rng: &mut Rng) -> Result<Array2<f64>> {
    let width = h.ncols();
    if width < 100 {
        return Err(Error::InvalidInput(format!("augment_h needs at least 100 columns, got {width}")));
    }
    let drop = width % 100;
    if drop == 0 {
        return Ok(h.clone());
    }
    let mut removed = vec![false; width];
    for i in sample(rng, width, drop) {
        removed[i] = true;
    }
    let keep: Vec<usize> = (0..width).filter(|&i| !removed[i]).collect();
    Ok(h.select(Axis(1), &keep))
}

/// Start offsets of `n` evenly spaced crops of `crop_len` from `len`
/// samples, spanning `[0, len − crop_len]`.
pub fn crop_offsets(len: usize, crop_len: usize, n: usize) -> Result<Vec<usize>> {
    if len < crop_len {
        return Err(Error::InvalidInput(format!("audio has {len} samples, shorter than the {crop_len}-sample crop")));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let span = (len - crop_len) as f64;
    Ok((0..n)
        .map(|i| if n == 1 { 0 } else { (span * i as f64 / (n - 1) as f64).round() as usize })
        .collect())
}

/// `n` sliding-window crops of `crop_len` samples.
pub fn augment_audio(a: &Waveform, crop_len: usize, n: usize) -> Result<Vec<Waveform>> {
    crop_offsets(a.len(), crop_len, n)?.into_iter().map(|o| a.crop(o, crop_len)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;

    fn indexed(width: usize) -> Array2<f64> {
        Array2::from_shape_fn((3, width), |(r, c)| (r * 100_000 + c) as f64)
    }

    #[test]
    fn rounds_width_down_to_hundreds() {
        let mut r = rng::seeded(1);
        assert_eq!(augment_h(&indexed(9882), &mut r).unwrap().ncols(), 9800);
        let h = indexed(5700);
        assert_eq!(augment_h(&h, &mut r).unwrap(), h);
        assert!(augment_h(&indexed(99), &mut r).is_err());
    }

    #[test]
    fn different_draws_drop_different_columns() {
        let h = indexed(1050);
        let a = augment_h(&h, &mut rng::seeded(1)).unwrap();
        let b = augment_h(&h, &mut rng::seeded(2)).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn audio_crops_span_the_recording() {
        let a = Waveform::new((0..24_175).map(|i| i as f64 / 1e5).collect(), 10_500).unwrap();
        let crops = augment_audio(&a, 21_000, 100).unwrap();
        assert_eq!(crops.len(), 100);
        let offs = crop_offsets(24_175, 21_000, 100).unwrap();
        assert_eq!((offs[0], offs[99]), (0, 3175));
        for (c, &o) in crops.iter().zip(&offs) {
            assert_eq!(c.len(), 21_000);
            assert_eq!(c.samples[..], a.samples[o..o + 21_000]);
        }
        let exact = Waveform::silence(21_000, 10_500);
        assert!(augment_audio(&exact, 21_000, 100).unwrap().iter().all(|c| c == &exact));
        assert!(augment_audio(&Waveform::silence(20_999, 10_500), 21_000, 3).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn surviving_columns_are_a_subsequence(width in 100usize..1500, seed in 0u64..1000) {
            let h = indexed(width);
            let out = augment_h(&h, &mut rng::seeded(seed)).unwrap();
            prop_assert_eq!(out.ncols(), width / 100 * 100);
            let cols: Vec<f64> = out.row(0).to_vec();
            prop_assert!(cols.windows(2).all(|w| w[0] < w[1]));
            for (r, row) in out.axis_iter(Axis(0)).enumerate() {
                for (c, v) in row.iter().enumerate() {
                    prop_assert_eq!(*v, (r * 100_000) as f64 + cols[c]);
                }
            }
        }
    }
}
