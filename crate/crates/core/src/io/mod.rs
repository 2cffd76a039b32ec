//! File formats shared by the command-line tools: matrix containers, PGM
//! plots, corpus manifests, project configs and CSV logs.

mod config;
mod manifest;
mod matrix;
mod pgm;

pub use config::{ProjectConfig, ProjectPaths};
pub use manifest::{read_manifest, write_manifest, ManifestRecord};
pub use matrix::{read_matrix, read_matrix_from, write_matrix, write_matrix_to, MATRIX_MAGIC, MATRIX_VERSION};
pub use pgm::{pgm_bytes, write_pgm};

use std::path::Path;

use crate::error::Result;

/// Writes a header and rows to a CSV file.
pub fn write_csv<I, R>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
{
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a CSV file with a header into string records.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.iter().map(str::to_string).collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|r| r.iter().map(str::to_string).collect()))
        .collect::<std::result::Result<_, _>>()?;
    Ok((header, rows))
}
