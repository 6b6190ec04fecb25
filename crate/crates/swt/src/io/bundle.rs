//! Decoder parameter bundles.
//!
//! A bundle is a directory holding one `FMAP` file per tensor plus a text
//! `manifest.txt` of `key = value` lines. Configuration keys (`levels`,
//! `window`, `channels`, `ratio`, `heads`, `seed`) carry their value inline;
//! every other key names a tensor and maps to its file name. Matrices are
//! stored as `out × in × 1` maps, vectors as `1 × n × 1`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use swt_core::crf::{
    AttentionParams, BlockParams, DecoderConfig, DecoderParams, LayerNorm, LevelParams,
};
use swt_core::tensor::Linear;
use swt_core::FeatureMap;

use super::fmap;
use crate::error::{Result, ToolError};

pub const MANIFEST: &str = "manifest.txt";

fn vector(v: &[f32]) -> FeatureMap {
    FeatureMap::new(1, v.len(), 1, v.to_vec()).expect("finite parameters")
}

fn matrix(rows: usize, cols: usize, v: &[f32]) -> FeatureMap {
    FeatureMap::new(rows, cols, 1, v.to_vec()).expect("finite parameters")
}

fn linear_tensors(prefix: &str, l: &Linear, out: &mut Vec<(String, FeatureMap)>) {
    out.push((format!("{prefix}.weight"), matrix(l.out_dim, l.in_dim, &l.weight)));
    out.push((format!("{prefix}.bias"), vector(&l.bias)));
}

fn block_tensors(prefix: &str, b: &BlockParams, out: &mut Vec<(String, FeatureMap)>) {
    for (name, l) in [("q", &b.attn.q), ("k", &b.attn.k), ("v", &b.attn.v), ("out", &b.attn.out)] {
        linear_tensors(&format!("{prefix}.attn.{name}"), l, out);
    }
    for (name, n) in [("norm1", &b.norm1), ("norm2", &b.norm2)] {
        out.push((format!("{prefix}.{name}.gain"), vector(&n.gain)));
        out.push((format!("{prefix}.{name}.bias"), vector(&n.bias)));
    }
    linear_tensors(&format!("{prefix}.fc1"), &b.fc1, out);
    linear_tensors(&format!("{prefix}.fc2"), &b.fc2, out);
    out.push((format!("{prefix}.cpe"), matrix(b.channels(), 9, &b.cpe)));
}

/// Write `params` and `cfg` into `dir`, creating it if needed.
pub fn save(dir: &Path, cfg: &DecoderConfig, params: &DecoderParams) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut tensors = Vec::new();
    for (l, lp) in params.levels.iter().enumerate() {
        if let Some(f) = &lp.fuse {
            linear_tensors(&format!("level{l}.fuse"), f, &mut tensors);
        }
        for (b, bp) in lp.blocks.iter().enumerate() {
            block_tensors(&format!("level{l}.block{b}"), bp, &mut tensors);
        }
    }
    linear_tensors("head", &params.head, &mut tensors);

    let mut manifest = String::new();
    let channels: Vec<String> = cfg.channels.iter().map(|c| c.to_string()).collect();
    writeln!(manifest, "levels = {}", cfg.levels).unwrap();
    writeln!(manifest, "window = {}", cfg.window).unwrap();
    writeln!(manifest, "channels = {}", channels.join(",")).unwrap();
    writeln!(manifest, "ratio = {}", cfg.ratio).unwrap();
    match cfg.heads {
        Some(h) => writeln!(manifest, "heads = {h}").unwrap(),
        None => writeln!(manifest, "heads = auto").unwrap(),
    }
    writeln!(manifest, "seed = {}", cfg.seed).unwrap();
    for (key, t) in &tensors {
        let file = format!("{key}.fmap");
        fmap::write(&dir.join(&file), t)?;
        writeln!(manifest, "{key} = {file}").unwrap();
    }
    std::fs::write(dir.join(MANIFEST), manifest)?;
    Ok(())
}

/// Parse `key = value` lines; blank lines and `#` comments are skipped.
pub fn parse_manifest(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| ToolError::format(format!("manifest line {} has no '='", n + 1)))?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

struct Loader<'a> {
    dir: &'a Path,
    entries: BTreeMap<String, String>,
}

impl Loader<'_> {
    fn value(&self, key: &str) -> Result<&str> {
        self.entries
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| ToolError::format(format!("manifest is missing {key:?}")))
    }

    fn number<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        self.value(key)?
            .parse()
            .map_err(|_| ToolError::format(format!("manifest value for {key:?} is not a number")))
    }

    fn tensor(&self, key: &str, rows: usize, cols: usize) -> Result<Vec<f32>> {
        let f = fmap::read(&self.dir.join(self.value(key)?))?;
        if (f.height(), f.width(), f.channels()) != (rows, cols, 1) {
            return Err(ToolError::format(format!(
                "tensor {key:?} is {}x{}x{}, expected {rows}x{cols}x1",
                f.height(),
                f.width(),
                f.channels()
            )));
        }
        Ok(f.into_data())
    }

    fn linear(&self, prefix: &str, in_dim: usize, out_dim: usize) -> Result<Linear> {
        let w = self.tensor(&format!("{prefix}.weight"), out_dim, in_dim)?;
        let b = self.tensor(&format!("{prefix}.bias"), 1, out_dim)?;
        Ok(Linear::new(in_dim, out_dim, w, b)?)
    }

    fn norm(&self, prefix: &str, c: usize) -> Result<LayerNorm> {
        Ok(LayerNorm {
            gain: self.tensor(&format!("{prefix}.gain"), 1, c)?,
            bias: self.tensor(&format!("{prefix}.bias"), 1, c)?,
        })
    }

    fn block(&self, prefix: &str, c: usize, ratio: usize, heads: usize) -> Result<BlockParams> {
        let attn = AttentionParams {
            q: self.linear(&format!("{prefix}.attn.q"), c, c)?,
            k: self.linear(&format!("{prefix}.attn.k"), c, c)?,
            v: self.linear(&format!("{prefix}.attn.v"), c, c)?,
            out: self.linear(&format!("{prefix}.attn.out"), c, c)?,
            heads,
        };
        let bp = BlockParams {
            attn,
            norm1: self.norm(&format!("{prefix}.norm1"), c)?,
            norm2: self.norm(&format!("{prefix}.norm2"), c)?,
            fc1: self.linear(&format!("{prefix}.fc1"), c, c * ratio)?,
            fc2: self.linear(&format!("{prefix}.fc2"), c * ratio, c)?,
            cpe: self.tensor(&format!("{prefix}.cpe"), c, 9)?,
        };
        bp.validate()?;
        Ok(bp)
    }
}

/// Read a bundle written by [`save`].
pub fn load(dir: &Path) -> Result<(DecoderConfig, DecoderParams)> {
    let entries = parse_manifest(&std::fs::read_to_string(dir.join(MANIFEST))?)?;
    let ld = Loader { dir, entries };
    let channels = ld
        .value("channels")?
        .split(',')
        .map(|s| s.trim().parse::<usize>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|_| ToolError::format("bad channel list in manifest"))?;
    let heads = match ld.value("heads")? {
        "auto" => None,
        _ => Some(ld.number("heads")?),
    };
    let cfg = DecoderConfig {
        levels: ld.number("levels")?,
        window: ld.number("window")?,
        channels,
        ratio: ld.number("ratio")?,
        seed: ld.number("seed")?,
        heads,
    };
    cfg.validate()?;
    let mut levels = Vec::with_capacity(cfg.levels);
    for l in 0..cfg.levels {
        let c = cfg.channels[l];
        let heads = cfg.heads_for(c);
        let fuse = if l + 1 < cfg.levels {
            Some(ld.linear(&format!("level{l}.fuse"), c + cfg.channels[l + 1], c)?)
        } else {
            None
        };
        let blocks = [
            ld.block(&format!("level{l}.block0"), c, cfg.ratio, heads)?,
            ld.block(&format!("level{l}.block1"), c, cfg.ratio, heads)?,
        ];
        levels.push(LevelParams { fuse, blocks });
    }
    let head = ld.linear("head", cfg.channels[0], 1)?;
    Ok((cfg, DecoderParams { levels, head }))
}
