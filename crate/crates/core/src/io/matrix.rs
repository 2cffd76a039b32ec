use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

pub const MATRIX_MAGIC: &[u8; 4] = b"NMFH";
pub const MATRIX_VERSION: u32 = 1;
/// Array rank stored in the header; only matrices are supported.
const ARRAY_RANK: u32 = 2;

/// Writes `m` as an "NMFH" container: magic, then version, array rank,
/// rows and cols as little-endian u32, then row-major little-endian f32.
pub fn write_matrix_to<W: Write>(m: &Array2<f64>, mut w: W) -> Result<()> {
    let (rows, cols) = m.dim();
    let dim = |n: usize| u32::try_from(n).map_err(|_| Error::InvalidInput(format!("matrix extent {n} exceeds u32")));
    w.write_all(MATRIX_MAGIC)?;
    for v in [MATRIX_VERSION, ARRAY_RANK, dim(rows)?, dim(cols)?] {
        w.write_all(&v.to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(rows * cols * 4);
    for v in m.iter() {
        buf.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    w.write_all(&buf)?;
    w.flush()?;
    Ok(())
}

pub fn read_matrix_from<R: Read>(mut r: R) -> Result<Array2<f64>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| Error::Format("matrix container: truncated header".into()))?;
    if &magic != MATRIX_MAGIC {
        return Err(Error::Format(format!("matrix container: bad magic {magic:?}, expected \"NMFH\"")));
    }
    let mut word = || -> Result<u32> {
        let mut b = [0u8; 4];
        r.read_exact(&mut b).map_err(|_| Error::Format("matrix container: truncated header".into()))?;
        Ok(u32::from_le_bytes(b))
    };
    let (version, rank, rows, cols) = (word()?, word()?, word()? as usize, word()? as usize);
    if version != MATRIX_VERSION {
        return Err(Error::Format(format!("matrix container: unsupported version {version}")));
    }
    if rank != ARRAY_RANK {
        return Err(Error::Format(format!("matrix container: array rank {rank}, expected 2")));
    }
    let n = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::Format(format!("matrix container: {rows}x{cols} is too large")))?;
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    if buf.len() != n {
        return Err(Error::Format(format!(
            "matrix container: {rows}x{cols} needs {n} data bytes, found {}",
            buf.len()
        )));
    }
    let data: Vec<f64> = buf.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64).collect();
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Format("matrix container: non-finite entry".into()));
    }
    Ok(Array2::from_shape_vec((rows, cols), data).expect("length checked"))
}

pub fn write_matrix(path: impl AsRef<Path>, m: &Array2<f64>) -> Result<()> {
    write_matrix_to(m, BufWriter::new(File::create(path)?))
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    let path = path.as_ref();
    let f = File::open(path)?;
    read_matrix_from(BufReader::new(f)).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bytes(m: &Array2<f64>) -> Vec<u8> {
        let mut v = Vec::new();
        write_matrix_to(m, &mut v).unwrap();
        v
    }

    #[test]
    fn header_layout() {
        let m = Array2::from_shape_vec((2, 3), vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.5]).unwrap();
        let b = bytes(&m);
        assert_eq!(&b[..4], b"NMFH");
        assert_eq!(b[4..8], 1u32.to_le_bytes());
        assert_eq!(b[8..12], 2u32.to_le_bytes());
        assert_eq!(b[12..16], 2u32.to_le_bytes());
        assert_eq!(b[16..20], 3u32.to_le_bytes());
        assert_eq!(b.len(), 20 + 6 * 4);
        assert_eq!(b[40..44], 6.5f32.to_le_bytes());
        assert_eq!(read_matrix_from(&b[..]).unwrap(), m);
    }

    #[test]
    fn malformed_containers() {
        let m = Array2::<f64>::ones((2, 2));
        let good = bytes(&m);
        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        assert!(matches!(read_matrix_from(&bad_magic[..]), Err(Error::Format(_))));
        assert!(matches!(read_matrix_from(&good[..good.len() - 1]), Err(Error::Format(_))));
        assert!(matches!(read_matrix_from(&good[..10]), Err(Error::Format(_))));
        let mut extra = good.clone();
        extra.push(0);
        assert!(matches!(read_matrix_from(&extra[..]), Err(Error::Format(_))));
        let mut rank3 = good.clone();
        rank3[8] = 3;
        assert!(matches!(read_matrix_from(&rank3[..]), Err(Error::Format(_))));
        let mut nan = good;
        nan[20..24].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(read_matrix_from(&nan[..]), Err(Error::Format(_))));
    }

    #[test]
    fn empty_matrix_round_trips() {
        let m = Array2::<f64>::zeros((20, 0));
        assert_eq!(read_matrix_from(&bytes(&m)[..]).unwrap().dim(), (20, 0));
    }

    proptest! {
        #[test]
        fn f32_values_round_trip_exactly(rows in 1usize..6, cols in 1usize..9, seed in 0u64..1000) {
            let mut r = crate::rng::seeded(seed);
            let m = Array2::from_shape_simple_fn((rows, cols), || crate::rng::normal(&mut r) as f32 as f64);
            prop_assert_eq!(read_matrix_from(&bytes(&m)[..]).unwrap(), m);
        }
    }
}
