//! `PLTC` parameter checkpoints.
//!
//! Layout (little-endian): magic `PLTC`, version `u32`, count `u32`, then per
//! parameter: name length `u16`, UTF-8 name, rank `u8`, extents `u32[rank]`,
//! `f64` data in row-major order.

use std::io::{Read, Write};
use std::path::Path;

use super::{ParamStore, Real, Tensor};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"PLTC";
pub const VERSION: u32 = 1;

pub fn write_checkpoint<T: Real, W: Write>(store: &ParamStore<T>, mut w: W) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(store.len() as u32).to_le_bytes())?;
    for p in store.iter() {
        let name = p.name.as_bytes();
        let name_len = u16::try_from(name.len())
            .map_err(|_| Error::InvalidInput(format!("parameter name too long: {}", p.name)))?;
        w.write_all(&name_len.to_le_bytes())?;
        w.write_all(name)?;
        w.write_all(&[p.value.rank() as u8])?;
        for &e in p.value.shape() {
            w.write_all(&(e as u32).to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(p.value.len() * 8);
        for v in p.value.data() {
            buf.extend_from_slice(&v.f64().to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

fn read_exact<R: Read>(r: &mut R, n: usize, what: &str) -> Result<Vec<u8>> {
    let mut buf = vec![0u8; n];
    r.read_exact(&mut buf)
        .map_err(|e| Error::Format(format!("checkpoint truncated while reading {what}: {e}")))?;
    Ok(buf)
}

fn read_u32<R: Read>(r: &mut R, what: &str) -> Result<u32> {
    Ok(u32::from_le_bytes(read_exact(r, 4, what)?.try_into().unwrap()))
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Vec<(String, Tensor<f64>)>> {
    let magic = read_exact(&mut r, 4, "magic")?;
    if magic != MAGIC {
        return Err(Error::Format(format!("not a PLTC checkpoint (magic {magic:?})")));
    }
    let version = read_u32(&mut r, "version")?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let count = read_u32(&mut r, "count")?;
    let mut out = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let len = u16::from_le_bytes(read_exact(&mut r, 2, "name length")?.try_into().unwrap());
        let name = String::from_utf8(read_exact(&mut r, len as usize, "name")?)
            .map_err(|_| Error::Format("parameter name is not UTF-8".into()))?;
        let rank = read_exact(&mut r, 1, "rank")?[0] as usize;
        let shape = (0..rank)
            .map(|_| read_u32(&mut r, "extent").map(|e| e as usize))
            .collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let bytes = read_exact(&mut r, n * 8, &name)?;
        let data = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        out.push((name, Tensor::new(shape, data)?));
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Format("trailing bytes after checkpoint records".into()));
    }
    Ok(out)
}

pub fn save<T: Real>(store: &ParamStore<T>, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_checkpoint(store, &mut buf)?;
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Vec<(String, Tensor<f64>)>> {
    read_checkpoint(std::io::BufReader::new(std::fs::File::open(path)?))
}
