use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// One corpus entry. Paths in the file are relative to the manifest's
/// directory; [`read_manifest`] resolves them.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestRecord {
    pub subject_id: String,
    pub utterance_id: String,
    pub h_path: PathBuf,
    pub wav_path: PathBuf,
}

const HEADER: [&str; 4] = ["subject_id", "utterance_id", "h_path", "wav_path"];

/// Writes records with paths made relative to `path`'s directory where
/// possible.
pub fn write_manifest(path: &Path, records: &[ManifestRecord]) -> Result<()> {
    let base = path.parent().unwrap_or(Path::new(""));
    let rel = |p: &Path| -> Result<String> {
        let p = p.strip_prefix(base).unwrap_or(p);
        p.to_str().map(str::to_string).ok_or_else(|| Error::InvalidInput(format!("path {} is not UTF-8", p.display())))
    };
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(HEADER)?;
    for r in records {
        w.write_record([r.subject_id.clone(), r.utterance_id.clone(), rel(&r.h_path)?, rel(&r.wav_path)?])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRecord>> {
    let base = path.parent().unwrap_or(Path::new(""));
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != HEADER {
        return Err(Error::Format(format!("{}: manifest header {header:?}, expected {HEADER:?}", path.display())));
    }
    let mut out = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        if rec.len() != 4 || rec.iter().any(str::is_empty) {
            return Err(Error::Format(format!("{}: record {} is incomplete", path.display(), line + 1)));
        }
        out.push(ManifestRecord {
            subject_id: rec[0].to_string(),
            utterance_id: rec[1].to_string(),
            h_path: base.join(&rec[2]),
            wav_path: base.join(&rec[3]),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_with_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.csv");
        let recs = vec![ManifestRecord {
            subject_id: "s01".into(),
            utterance_id: "a souk".into(),
            h_path: dir.path().join("h/0000.nmfh"),
            wav_path: dir.path().join("wav/0000.wav"),
        }];
        write_manifest(&path, &recs).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "subject_id,utterance_id,h_path,wav_path\ns01,a souk,h/0000.nmfh,wav/0000.wav\n");
        assert_eq!(read_manifest(&path).unwrap(), recs);
    }

    #[test]
    fn rejects_bad_header_and_short_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        std::fs::write(&path, "subject,utterance,h,wav\n").unwrap();
        assert!(matches!(read_manifest(&path), Err(Error::Format(_))));
        std::fs::write(&path, "subject_id,utterance_id,h_path,wav_path\ns01,a souk,,x.wav\n").unwrap();
        assert!(matches!(read_manifest(&path), Err(Error::Format(_))));
    }
}
