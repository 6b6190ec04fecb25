//! Portable float maps (`Pf` grayscale, `PF` RGB).
//!
//! Rows are stored bottom-to-top; a negative scale marks little-endian data.
//! Loaded maps are flipped to the usual top-to-bottom order.

use std::io::Write;
use std::path::Path;

use swt_core::FeatureMap;

use crate::error::{Result, ToolError};

fn header_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a str> {
    while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(ToolError::format("truncated PFM header"));
    }
    std::str::from_utf8(&bytes[start..*pos]).map_err(|_| ToolError::format("PFM header is not ASCII"))
}

pub fn decode(bytes: &[u8]) -> Result<FeatureMap> {
    let mut pos = 0;
    let channels = match header_token(bytes, &mut pos)? {
        "Pf" => 1,
        "PF" => 3,
        other => return Err(ToolError::format(format!("unknown PFM magic {other:?}"))),
    };
    let parse = |t: &str| t.parse::<usize>().map_err(|_| ToolError::format("bad PFM dimension"));
    let width = parse(header_token(bytes, &mut pos)?)?;
    let height = parse(header_token(bytes, &mut pos)?)?;
    let scale: f32 = header_token(bytes, &mut pos)?
        .parse()
        .map_err(|_| ToolError::format("bad PFM scale"))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(ToolError::format("PFM scale must be a non-zero number"));
    }
    // Exactly one whitespace byte separates the header from the payload.
    pos += 1;
    let n = width * height * channels;
    let payload = bytes
        .get(pos..)
        .filter(|p| p.len() == n * 4)
        .ok_or_else(|| ToolError::format("PFM payload size does not match its header"))?;
    let little = scale < 0.0;
    let values: Vec<f32> = payload
        .chunks_exact(4)
        .map(|b| {
            let b = [b[0], b[1], b[2], b[3]];
            if little {
                f32::from_le_bytes(b)
            } else {
                f32::from_be_bytes(b)
            }
        })
        .collect();
    let row = width * channels;
    let mut data = Vec::with_capacity(n);
    for r in (0..height).rev() {
        data.extend_from_slice(&values[r * row..(r + 1) * row]);
    }
    Ok(FeatureMap::new(height, width, channels, data)?)
}

pub fn encode(f: &FeatureMap) -> Result<Vec<u8>> {
    let magic = match f.channels() {
        1 => "Pf",
        3 => "PF",
        c => return Err(ToolError::format(format!("PFM cannot hold {c} channels"))),
    };
    let mut out = format!("{magic}\n{} {}\n-1.0\n", f.width(), f.height()).into_bytes();
    let row = f.width() * f.channels();
    for r in (0..f.height()).rev() {
        for v in &f.data()[r * row..(r + 1) * row] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn read(path: &Path) -> Result<FeatureMap> {
    decode(&std::fs::read(path)?)
}

pub fn write(path: &Path, f: &FeatureMap) -> Result<()> {
    std::fs::File::create(path)?.write_all(&encode(f)?)?;
    Ok(())
}
