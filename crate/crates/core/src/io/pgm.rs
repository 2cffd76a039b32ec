use std::path::Path;

use ndarray::Array2;

use crate::error::Result;

/// Binary (P5) 8-bit grayscale image of `grid`, scaled so its minimum is
/// black and maximum white. With `flip` the last row is drawn at the top,
/// which puts low mel bins at the bottom of a spectrogram plot.
pub fn pgm_bytes(grid: &Array2<f64>, flip: bool) -> Vec<u8> {
    let (rows, cols) = grid.dim();
    let lo = grid.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = grid.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut out = format!("P5\n{cols} {rows}\n255\n").into_bytes();
    for r in 0..rows {
        let src = if flip { rows - 1 - r } else { r };
        for c in 0..cols {
            let v = grid[[src, c]];
            let level = if v.is_finite() { ((v - lo) / span * 255.0).round().clamp(0.0, 255.0) } else { 0.0 };
            out.push(level as u8);
        }
    }
    out
}

pub fn write_pgm(path: impl AsRef<Path>, grid: &Array2<f64>, flip: bool) -> Result<()> {
    std::fs::write(path, pgm_bytes(grid, flip))?;
    Ok(())
}
