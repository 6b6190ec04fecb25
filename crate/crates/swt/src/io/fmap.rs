//! `FMAP` raw tensors: magic `FMAP`, version `u16`, `u32` H, W, C, then
//! `H·W·C` little-endian `f32` values in `(row, col, channel)` order.

use std::io::{BufReader, Write};
use std::path::Path;

use swt_core::FeatureMap;

use super::LeReader;
use crate::error::{Result, ToolError};

pub const MAGIC: &[u8; 4] = b"FMAP";
pub const VERSION: u16 = 1;

pub fn encode(f: &FeatureMap) -> Vec<u8> {
    let mut out = Vec::with_capacity(18 + f.data().len() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for v in [f.height(), f.width(), f.channels()] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for v in f.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn read_from(src: impl std::io::Read) -> Result<FeatureMap> {
    let mut r = LeReader::new(src);
    if &r.bytes::<4>()? != MAGIC {
        return Err(ToolError::format("not an FMAP file"));
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(ToolError::format(format!("unsupported FMAP version {version}")));
    }
    let (h, w, c) = (r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
    let n = h
        .checked_mul(w)
        .and_then(|x| x.checked_mul(c))
        .ok_or_else(|| ToolError::format("FMAP dimensions overflow"))?;
    let data = (0..n).map(|_| r.f32()).collect::<Result<Vec<_>>>()?;
    r.finish()?;
    Ok(FeatureMap::new(h, w, c, data)?)
}

pub fn decode(bytes: &[u8]) -> Result<FeatureMap> {
    read_from(bytes)
}

pub fn write(path: &Path, f: &FeatureMap) -> Result<()> {
    std::fs::File::create(path)?.write_all(&encode(f))?;
    Ok(())
}

pub fn read(path: &Path) -> Result<FeatureMap> {
    read_from(BufReader::new(std::fs::File::open(path)?))
}
