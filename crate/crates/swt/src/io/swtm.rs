//! `SWTM` index map files.
//!
//! ```text
//! magic    "SWTM"
//! version  u16            (1)
//! H W nH nW m_rows m_cols dilation   u32 each
//! coords   u8             (0 = absent, 1 = present)
//! indices  nH·nW·m_rows·m_cols × u32
//! [coords  same count × (lat f64, lon f64)]
//! ```
//!
//! All integers and floats are little-endian; windows are row-major by
//! `(window_row, window_col)` and nodes row-major inside each window.

use std::io::{BufReader, Write};
use std::path::Path;

use swt_core::{AngleCoord, ErpGridSpec, IndexMap, TemplateConfig};

use super::LeReader;
use crate::error::{Result, ToolError};

pub const MAGIC: &[u8; 4] = b"SWTM";
pub const VERSION: u16 = 1;

pub fn encode(map: &IndexMap) -> Vec<u8> {
    let cfg = map.config();
    let mut out = Vec::with_capacity(35 + map.indices().len() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for v in [
        cfg.grid.height,
        cfg.grid.width,
        map.n_h(),
        map.n_w(),
        cfg.m_rows,
        cfg.m_cols,
        cfg.dilation,
    ] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.push(map.coords().is_some() as u8);
    for i in map.indices() {
        out.extend_from_slice(&i.to_le_bytes());
    }
    if let Some(coords) = map.coords() {
        for a in coords {
            out.extend_from_slice(&a.lat.to_le_bytes());
            out.extend_from_slice(&a.lon.to_le_bytes());
        }
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<IndexMap> {
    read_from(bytes)
}

fn read_from(src: impl std::io::Read) -> Result<IndexMap> {
    let mut r = LeReader::new(src);
    if &r.bytes::<4>()? != MAGIC {
        return Err(ToolError::format("not an SWTM file"));
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(ToolError::format(format!("unsupported SWTM version {version}")));
    }
    let mut h = [0usize; 7];
    for v in h.iter_mut() {
        *v = r.u32()? as usize;
    }
    let [height, width, n_h, n_w, m_rows, m_cols, dilation] = h;
    let grid = ErpGridSpec::new(height, width)?;
    let cfg = TemplateConfig::new(grid, m_rows, m_cols, dilation)?;
    if cfg.window_layout()? != (n_h, n_w) {
        return Err(ToolError::format("window layout disagrees with grid and template"));
    }
    let has_coords = match r.u8()? {
        0 => false,
        1 => true,
        other => return Err(ToolError::format(format!("bad coordinate flag {other}"))),
    };
    let count = n_h * n_w * m_rows * m_cols;
    let indices = (0..count).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
    let coords = if has_coords {
        Some(
            (0..count)
                .map(|_| Ok(AngleCoord { lat: r.f64()?, lon: r.f64()? }))
                .collect::<Result<Vec<_>>>()?,
        )
    } else {
        None
    };
    r.finish()?;
    Ok(IndexMap::from_parts(cfg, indices, coords)?)
}

pub fn write(path: &Path, map: &IndexMap) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&encode(map))?;
    Ok(())
}

pub fn read(path: &Path) -> Result<IndexMap> {
    read_from(BufReader::new(std::fs::File::open(path)?))
}
