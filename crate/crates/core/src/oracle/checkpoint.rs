//! Model checkpoint serialization.
//!
//! Layout, all integers and floats little-endian:
//!
//! | offset | size | field                                     |
//! |--------|------|-------------------------------------------|
//! | 0      | 4    | magic bytes `DVAG`                        |
//! | 4      | 4    | u32 format version (currently 1)          |
//! | 8      | 4    | u32 input height                          |
//! | 12     | 4    | u32 input width                           |
//! | 16     | 4    | u32 input channels                        |
//! | 20     | 4    | u32 hidden width (0 = linear model)       |
//! | 24     | 4    | u32 class count D                         |
//! | 28     | 16*C | per channel: f64 mean, f64 std            |
//! | ...    | 8    | u64 parameter count                       |
//! | ...    | 8*N  | parameters as f64                         |
//!
//! Parameter order: hidden model `W1 (H x IN) row-major, b1, W2 (D x H)
//! row-major, b2`; linear model `W (D x IN) row-major, b`.

use super::{Architecture, Normalization, OracleModel};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"DVAG";
const VERSION: u32 = 1;

pub fn save_checkpoint<S: Scalar>(model: &OracleModel<S>, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    let arch = model.arch();
    for v in [
        arch.input_height,
        arch.input_width,
        arch.input_channels,
        arch.hidden.unwrap_or(0),
        arch.classes,
    ] {
        let v = u32::try_from(v).map_err(|_| Error::Checkpoint("dimension exceeds u32".into()))?;
        w.write_all(&v.to_le_bytes())?;
    }
    let norm = model.normalization();
    for c in 0..arch.input_channels {
        w.write_all(&norm.mean[c].to_le_bytes())?;
        w.write_all(&norm.std[c].to_le_bytes())?;
    }
    w.write_all(&(model.params().len() as u64).to_le_bytes())?;
    for &p in model.params() {
        w.write_all(&p.into_f64().to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint<S: Scalar>(path: &Path) -> Result<OracleModel<S>> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    read_exact(&mut r, &mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("bad magic bytes".into()));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let input_height = read_u32(&mut r)? as usize;
    let input_width = read_u32(&mut r)? as usize;
    let input_channels = read_u32(&mut r)? as usize;
    let hidden = read_u32(&mut r)? as usize;
    let classes = read_u32(&mut r)? as usize;
    let arch = Architecture {
        input_height,
        input_width,
        input_channels,
        hidden: if hidden == 0 { None } else { Some(hidden) },
        classes,
    };
    if input_channels == 0 || classes == 0 || arch.input_dim() == 0 {
        return Err(Error::Checkpoint("degenerate architecture".into()));
    }
    let mut mean = Vec::with_capacity(input_channels);
    let mut std = Vec::with_capacity(input_channels);
    for _ in 0..input_channels {
        mean.push(read_f64(&mut r)?);
        std.push(read_f64(&mut r)?);
    }
    let count = read_u64(&mut r)? as usize;
    if count != arch.param_count() {
        return Err(Error::Checkpoint(format!(
            "parameter count {count} does not match architecture ({})",
            arch.param_count()
        )));
    }
    let mut params = Vec::with_capacity(count);
    for _ in 0..count {
        params.push(S::from_f64_lossy(read_f64(&mut r)?));
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(Error::Checkpoint("trailing bytes after parameters".into()));
    }
    OracleModel::from_parts(arch, Normalization { mean, std }, params)
}

fn read_exact(r: &mut impl Read, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| Error::Checkpoint("truncated checkpoint".into()))
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(f64::from_le_bytes(b))
}
