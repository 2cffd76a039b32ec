use std::path::Path;

use hound::{SampleFormat, WavSpec, WavWriter};

use super::Waveform;
use crate::error::{Error, Result};

/// Writes 16-bit PCM mono. Samples are clipped to `[-1, 1)`.
pub fn write_wav(path: impl AsRef<Path>, w: &Waveform) -> Result<()> {
    let spec = WavSpec { channels: 1, sample_rate: w.sample_rate, bits_per_sample: 16, sample_format: SampleFormat::Int };
    let mut out = WavWriter::create(path, spec)?;
    for &s in &w.samples {
        out.write_sample((s * 32768.0).round().clamp(-32768.0, 32767.0) as i16)?;
    }
    out.finalize()?;
    Ok(())
}

/// Reads 16-bit PCM mono; anything else is rejected.
pub fn read_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let path = path.as_ref();
    let mut r = hound::WavReader::open(path).map_err(|e| match e {
        hound::Error::IoError(io)
            if matches!(io.kind(), std::io::ErrorKind::NotFound | std::io::ErrorKind::PermissionDenied) =>
        {
            Error::Io(io)
        }
        other => Error::Format(format!("{}: malformed wav header: {other}", path.display())),
    })?;
    let spec = r.spec();
    if spec.sample_format != SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(Error::Format(format!(
            "{}: expected 16-bit PCM, found {:?} with {} bits",
            path.display(),
            spec.sample_format,
            spec.bits_per_sample
        )));
    }
    if spec.channels != 1 {
        return Err(Error::Format(format!("{}: expected mono, found {} channels", path.display(), spec.channels)));
    }
    let samples = r
        .samples::<i16>()
        .map(|s| s.map(|v| v as f64 / 32768.0))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    Waveform::new(samples, spec.sample_rate)
}

/// Like [`read_wav`], also returning a warning when the file's sample rate
/// differs from `expected`. No resampling is done.
pub fn read_wav_expecting(path: impl AsRef<Path>, expected: u32) -> Result<(Waveform, Option<String>)> {
    let path = path.as_ref();
    let w = read_wav(path)?;
    let warning = (w.sample_rate != expected).then(|| {
        let msg = format!(
            "{}: sample rate {} Hz differs from configured {} Hz; not resampled",
            path.display(),
            w.sample_rate,
            expected
        );
        log::warn!("{msg}");
        msg
    });
    Ok((w, warning))
}
