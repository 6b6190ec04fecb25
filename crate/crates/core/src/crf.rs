//! Forward pass of the spherical window CRF block and a multi-level decoder.
//!
//! A block treats window attention as the pairwise potential of a CRF: the
//! unary term is an identity residual, the pairwise term attends regular
//! window queries/values against keys gathered through an SWT [`IndexMap`],
//! and an MLP refines their sum.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geom::ErpGridSpec;
use crate::math;
use crate::swt::{build_index_map_fast, sample, IndexMap, SampleMode, TemplateConfig};
use crate::tensor::{
    attention_weights, default_heads, merge_windows, mhsa, partition_windows, FeatureMap, Linear,
    WindowSet,
};

pub use crate::tensor::AttentionParams;

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Per-node layer normalization with learned gain and bias.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    pub gain: Vec<f32>,
    pub bias: Vec<f32>,
}

impl LayerNorm {
    pub fn new(channels: usize) -> Self {
        LayerNorm {
            gain: vec![1.0; channels],
            bias: vec![0.0; channels],
        }
    }

    pub fn zeros(channels: usize) -> Self {
        LayerNorm {
            gain: vec![0.0; channels],
            bias: vec![0.0; channels],
        }
    }

    pub fn apply(&self, f: &FeatureMap) -> Result<FeatureMap> {
        let c = f.channels();
        if self.gain.len() != c || self.bias.len() != c {
            return Err(Error::shape("layer norm size does not match channels"));
        }
        let mut out = Vec::with_capacity(f.data().len());
        for x in f.data().chunks_exact(c) {
            let mean = x.iter().map(|&v| v as f64).sum::<f64>() / c as f64;
            let var = x.iter().map(|&v| { let d = v as f64 - mean; d * d }).sum::<f64>() / c as f64;
            let inv = 1.0 / math::sqrt(var + LAYER_NORM_EPS);
            for ((v, g), b) in x.iter().zip(&self.gain).zip(&self.bias) {
                out.push(((*v as f64 - mean) * inv * *g as f64 + *b as f64) as f32);
            }
        }
        FeatureMap::new(f.height(), f.width(), c, out)
    }
}

/// Gaussian error linear unit, exact form.
pub fn gelu(x: f32) -> f32 {
    let x = x as f64;
    (0.5 * x * (1.0 + math::erf(x / core::f64::consts::SQRT_2))) as f32
}

/// `ln(1 + eˣ)` without overflow.
pub fn softplus(x: f32) -> f32 {
    let x = x as f64;
    (x.max(0.0) + math::ln_1p(math::exp(-x.abs()))) as f32
}

/// Conditional positional embedding: `f + dwconv3x3(f)`.
///
/// `kernel` holds `C × 3 × 3` taps. Padding wraps horizontally and is zero
/// vertically.
pub fn cpe(f: &FeatureMap, kernel: &[f32]) -> Result<FeatureMap> {
    let (h, w, c) = (f.height(), f.width(), f.channels());
    if kernel.len() != c * 9 {
        return Err(Error::shape(format!(
            "CPE kernel has {} taps, expected {}",
            kernel.len(),
            c * 9
        )));
    }
    let mut out = Vec::with_capacity(f.data().len());
    for r in 0..h {
        for col in 0..w {
            for ch in 0..c {
                let taps = &kernel[ch * 9..ch * 9 + 9];
                let mut acc = f.get(r, col, ch) as f64;
                for dy in 0..3 {
                    let rr = r as i64 + dy as i64 - 1;
                    if rr < 0 || rr >= h as i64 {
                        continue;
                    }
                    for dx in 0..3 {
                        let cc = (col as i64 + dx as i64 - 1).rem_euclid(w as i64) as usize;
                        acc += taps[dy * 3 + dx] as f64 * f.get(rr as usize, cc, ch) as f64;
                    }
                }
                out.push(acc as f32);
            }
        }
    }
    FeatureMap::new(h, w, c, out)
}

/// Parameters of one CRF block.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockParams {
    pub attn: AttentionParams,
    pub norm1: LayerNorm,
    pub norm2: LayerNorm,
    pub fc1: Linear,
    pub fc2: Linear,
    /// Depth-wise `C × 3 × 3` CPE taps.
    pub cpe: Vec<f32>,
}

impl BlockParams {
    pub fn channels(&self) -> usize {
        self.attn.channels()
    }

    /// Every learned tensor zero, norms included.
    pub fn zeros(channels: usize, ratio: usize, heads: usize) -> Self {
        BlockParams {
            attn: AttentionParams::zeros(channels, heads),
            norm1: LayerNorm::zeros(channels),
            norm2: LayerNorm::zeros(channels),
            fc1: Linear::zeros(channels, channels * ratio),
            fc2: Linear::zeros(channels * ratio, channels),
            cpe: vec![0.0; channels * 9],
        }
    }

    /// Seeded initialization: uniform projections, unit norms, zero CPE.
    pub fn random(channels: usize, ratio: usize, heads: usize, rng: &mut ChaCha8Rng) -> Self {
        BlockParams {
            attn: AttentionParams::random(channels, heads, rng),
            norm1: LayerNorm::new(channels),
            norm2: LayerNorm::new(channels),
            fc1: Linear::random(channels, channels * ratio, rng),
            fc2: Linear::random(channels * ratio, channels, rng),
            cpe: vec![0.0; channels * 9],
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.attn.validate()?;
        let c = self.channels();
        if self.fc1.in_dim != c || self.fc2.out_dim != c || self.fc1.out_dim != self.fc2.in_dim {
            return Err(Error::shape("MLP dimensions do not match the block channels"));
        }
        if self.fc1.out_dim < c {
            return Err(Error::config("MLP expansion ratio must be at least 1"));
        }
        if self.cpe.len() != c * 9 {
            return Err(Error::shape("CPE kernel does not match the block channels"));
        }
        Ok(())
    }
}

fn check_map(f: &FeatureMap, map: &IndexMap) -> Result<()> {
    let grid = map.grid();
    if f.height() != grid.height || f.width() != grid.width {
        return Err(Error::shape(format!(
            "feature map is {}x{} but the index map targets {}x{}",
            f.height(),
            f.width(),
            grid.height,
            grid.width
        )));
    }
    if map.config().dilation != 1 {
        return Err(Error::shape("attention needs an index map with dilation 1"));
    }
    Ok(())
}

struct Projected {
    q: WindowSet,
    k: WindowSet,
    v: WindowSet,
}

fn project_psi(f: &FeatureMap, p: &AttentionParams, map: &IndexMap) -> Result<Projected> {
    p.validate()?;
    check_map(f, map)?;
    let cfg = map.config();
    let q = partition_windows(&p.q.apply_map(f)?, cfg.m_rows, cfg.m_cols)?;
    let v = partition_windows(&p.v.apply_map(f)?, cfg.m_rows, cfg.m_cols)?;
    let k = sample(&p.k.apply_map(f)?, map, SampleMode::Nearest)?;
    Ok(Projected { q, k, v })
}

/// Planar-spherical attention: regular-window queries and values attend to
/// keys gathered through `map`.
pub fn psi_forward(f: &FeatureMap, p: &AttentionParams, map: &IndexMap) -> Result<FeatureMap> {
    let Projected { q, k, v } = project_psi(f, p, map)?;
    merge_windows(&mhsa(&q, &k, &v, p)?)
}

/// Attention weights used by [`psi_forward`], `[window][head][query][key]`.
pub fn psi_attention(f: &FeatureMap, p: &AttentionParams, map: &IndexMap) -> Result<Vec<f64>> {
    let Projected { q, k, .. } = project_psi(f, p, map)?;
    attention_weights(&q, &k, p.heads)
}

/// Plain window self-attention over `m_rows × m_cols` windows.
pub fn window_attention(
    f: &FeatureMap,
    p: &AttentionParams,
    m_rows: usize,
    m_cols: usize,
) -> Result<FeatureMap> {
    p.validate()?;
    let q = partition_windows(&p.q.apply_map(f)?, m_rows, m_cols)?;
    let k = partition_windows(&p.k.apply_map(f)?, m_rows, m_cols)?;
    let v = partition_windows(&p.v.apply_map(f)?, m_rows, m_cols)?;
    merge_windows(&mhsa(&q, &k, &v, p)?)
}

fn mlp(f: &FeatureMap, bp: &BlockParams) -> Result<FeatureMap> {
    let hidden: Vec<f32> = bp.fc1.apply_rows(f.data()).into_iter().map(gelu).collect();
    FeatureMap::new(f.height(), f.width(), f.channels(), bp.fc2.apply_rows(&hidden))
}

/// One CRF block:
///
/// ```text
/// x = cpe(f)
/// s = x + psi(norm1(x))
/// out = s + mlp(norm2(s))
/// ```
pub fn sfcrf_block(f: &FeatureMap, bp: &BlockParams, map: &IndexMap) -> Result<FeatureMap> {
    bp.validate()?;
    if f.channels() != bp.channels() {
        return Err(Error::shape(format!(
            "block expects {} channels, map has {}",
            bp.channels(),
            f.channels()
        )));
    }
    check_map(f, map)?;
    let x = cpe(f, &bp.cpe)?;
    let pairwise = psi_forward(&bp.norm1.apply(&x)?, &bp.attn, map)?;
    let s = x.add(&pairwise)?;
    let refined = mlp(&bp.norm2.apply(&s)?, bp)?;
    s.add(&refined)
}

/// Decoder layout. `channels[0]` belongs to the finest level (`H/4`), the
/// last entry to the coarsest.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderConfig {
    pub levels: usize,
    pub window: usize,
    pub channels: Vec<usize>,
    pub ratio: usize,
    pub seed: u64,
    /// Heads per level; `None` uses [`default_heads`].
    pub heads: Option<usize>,
}

impl DecoderConfig {
    pub fn new(channels: Vec<usize>, seed: u64) -> Self {
        DecoderConfig {
            levels: channels.len(),
            window: 4,
            channels,
            ratio: 4,
            seed,
            heads: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels == 0 || self.channels.len() != self.levels {
            return Err(Error::config("need one channel count per decoder level"));
        }
        if self.window == 0 || self.ratio == 0 {
            return Err(Error::config("window size and MLP ratio must be positive"));
        }
        if self.channels.contains(&0) {
            return Err(Error::config("channel counts must be positive"));
        }
        Ok(())
    }

    pub fn heads_for(&self, channels: usize) -> usize {
        self.heads.unwrap_or_else(|| default_heads(channels))
    }

    /// Window `(rows, cols)` used at a level of the given size: the configured
    /// window, clamped to the level extent.
    pub fn level_window(&self, height: usize, width: usize) -> (usize, usize) {
        (self.window.min(height), self.window.min(width))
    }
}

/// Parameters of one decoder level.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelParams {
    /// `1×1` fusion of the upsampled coarser output with the skip feature;
    /// absent at the coarsest level.
    pub fuse: Option<Linear>,
    pub blocks: [BlockParams; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderParams {
    pub levels: Vec<LevelParams>,
    pub head: Linear,
}

impl DecoderParams {
    /// Draw every parameter from a ChaCha8 stream seeded with `cfg.seed`.
    pub fn init(cfg: &DecoderConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut levels = Vec::with_capacity(cfg.levels);
        for l in 0..cfg.levels {
            let c = cfg.channels[l];
            let heads = cfg.heads_for(c);
            let fuse = (l + 1 < cfg.levels).then(|| Linear::random(cfg.channels[l + 1] + c, c, &mut rng));
            let blocks = [
                BlockParams::random(c, cfg.ratio, heads, &mut rng),
                BlockParams::random(c, cfg.ratio, heads, &mut rng),
            ];
            levels.push(LevelParams { fuse, blocks });
        }
        let head = Linear::random(cfg.channels[0], 1, &mut rng);
        Ok(DecoderParams { levels, head })
    }
}

/// Nearest-neighbour ×`factor` upsampling.
pub fn upsample_nearest(f: &FeatureMap, factor: usize) -> FeatureMap {
    let (h, w, c) = (f.height() * factor, f.width() * factor, f.channels());
    let mut data = Vec::with_capacity(h * w * c);
    for r in 0..h {
        for col in 0..w {
            data.extend_from_slice(f.pixel(r / factor, col / factor));
        }
    }
    FeatureMap::new(h, w, c, data).expect("upsampled values stay finite")
}

/// Bilinear ×`factor` upsampling with half-pixel centers; columns wrap around
/// the seam, rows clamp at the poles.
pub fn upsample_bilinear(f: &FeatureMap, factor: usize) -> FeatureMap {
    let (sh, sw, c) = (f.height(), f.width(), f.channels());
    let (h, w) = (sh * factor, sw * factor);
    let scale = factor as f64;
    let mut data = Vec::with_capacity(h * w * c);
    for r in 0..h {
        let y = (r as f64 + 0.5) / scale - 0.5;
        let y0 = math::floor(y);
        let fy = y - y0;
        let r0 = (y0 as i64).clamp(0, sh as i64 - 1) as usize;
        let r1 = (y0 as i64 + 1).clamp(0, sh as i64 - 1) as usize;
        for col in 0..w {
            let x = (col as f64 + 0.5) / scale - 0.5;
            let x0 = math::floor(x);
            let fx = x - x0;
            let c0 = (x0 as i64).rem_euclid(sw as i64) as usize;
            let c1 = (x0 as i64 + 1).rem_euclid(sw as i64) as usize;
            for ch in 0..c {
                let v = (1.0 - fy) * ((1.0 - fx) * f.get(r0, c0, ch) as f64 + fx * f.get(r0, c1, ch) as f64)
                    + fy * ((1.0 - fx) * f.get(r1, c0, ch) as f64 + fx * f.get(r1, c1, ch) as f64);
                data.push(v as f32);
            }
        }
    }
    FeatureMap::new(h, w, c, data).expect("interpolated values stay finite")
}

/// Decoder bound to the per-level index maps it gathers keys through.
#[derive(Debug, Clone)]
pub struct Decoder {
    cfg: DecoderConfig,
    params: DecoderParams,
    maps: Vec<IndexMap>,
}

impl Decoder {
    /// Build SWT maps (fast path) for a pyramid whose finest level is
    /// `finest`; level `l` is `finest` halved `l` times.
    pub fn new(cfg: DecoderConfig, params: DecoderParams, finest: ErpGridSpec) -> Result<Self> {
        let maps = Self::level_grids(&cfg, finest)?
            .into_iter()
            .map(|(g, (mr, mc))| build_index_map_fast(&g, &TemplateConfig::new(g, mr, mc, 1)?))
            .collect::<Result<Vec<_>>>()?;
        Self::with_maps(cfg, params, maps)
    }

    /// Same decoder with the regular partition in place of every SWT map.
    pub fn with_identity_maps(
        cfg: DecoderConfig,
        params: DecoderParams,
        finest: ErpGridSpec,
    ) -> Result<Self> {
        let maps = Self::level_grids(&cfg, finest)?
            .into_iter()
            .map(|(g, (mr, mc))| IndexMap::identity(g, mr, mc))
            .collect::<Result<Vec<_>>>()?;
        Self::with_maps(cfg, params, maps)
    }

    pub fn with_maps(cfg: DecoderConfig, params: DecoderParams, maps: Vec<IndexMap>) -> Result<Self> {
        cfg.validate()?;
        if params.levels.len() != cfg.levels || maps.len() != cfg.levels {
            return Err(Error::shape("decoder needs parameters and a map for every level"));
        }
        for (l, (lp, map)) in params.levels.iter().zip(&maps).enumerate() {
            let c = cfg.channels[l];
            for b in &lp.blocks {
                b.validate()?;
                if b.channels() != c {
                    return Err(Error::shape(format!("level {} blocks expect {} channels", l, c)));
                }
            }
            match (&lp.fuse, l + 1 < cfg.levels) {
                (Some(fz), true) if fz.in_dim == c + cfg.channels[l + 1] && fz.out_dim == c => {}
                (None, false) => {}
                _ => return Err(Error::shape(format!("level {} fusion layer is inconsistent", l))),
            }
            if l > 0 {
                let (prev, cur) = (maps[l - 1].grid(), map.grid());
                if prev.height != 2 * cur.height || prev.width != 2 * cur.width {
                    return Err(Error::shape("decoder levels must halve in resolution"));
                }
            }
        }
        if params.head.in_dim != cfg.channels[0] || params.head.out_dim != 1 {
            return Err(Error::shape("depth head must map the finest channels to one"));
        }
        Ok(Decoder { cfg, params, maps })
    }

    fn level_grids(
        cfg: &DecoderConfig,
        finest: ErpGridSpec,
    ) -> Result<Vec<(ErpGridSpec, (usize, usize))>> {
        cfg.validate()?;
        (0..cfg.levels)
            .map(|l| {
                let (h, w) = (finest.height >> l, finest.width >> l);
                if h << l != finest.height || w << l != finest.width {
                    return Err(Error::shape(format!(
                        "finest level {}x{} cannot be halved {} times",
                        finest.height, finest.width, l
                    )));
                }
                let g = ErpGridSpec::new(h, w)?;
                Ok((g, cfg.level_window(h, w)))
            })
            .collect()
    }

    pub fn config(&self) -> &DecoderConfig {
        &self.cfg
    }

    pub fn maps(&self) -> &[IndexMap] {
        &self.maps
    }

    /// Run the decoder on encoder features, finest level first. Returns a
    /// strictly positive one-channel depth map four times the finest size.
    pub fn forward(&self, pyramid: &[FeatureMap]) -> Result<FeatureMap> {
        if pyramid.len() != self.cfg.levels {
            return Err(Error::shape(format!(
                "pyramid has {} levels, decoder expects {}",
                pyramid.len(),
                self.cfg.levels
            )));
        }
        for (l, (f, map)) in pyramid.iter().zip(&self.maps).enumerate() {
            let g = map.grid();
            if f.height() != g.height || f.width() != g.width || f.channels() != self.cfg.channels[l] {
                return Err(Error::shape(format!(
                    "pyramid level {} is {}x{}x{}, expected {}x{}x{}",
                    l,
                    f.height(),
                    f.width(),
                    f.channels(),
                    g.height,
                    g.width,
                    self.cfg.channels[l]
                )));
            }
        }
        let mut x: Option<FeatureMap> = None;
        for l in (0..self.cfg.levels).rev() {
            let lp = &self.params.levels[l];
            let map = &self.maps[l];
            let mut cur = match (x.take(), &lp.fuse) {
                (None, _) => pyramid[l].clone(),
                (Some(prev), Some(fuse)) => {
                    fuse.apply_map(&upsample_nearest(&prev, 2).concat_channels(&pyramid[l])?)?
                }
                (Some(_), None) => return Err(Error::shape("missing fusion layer")),
            };
            for b in &lp.blocks {
                cur = sfcrf_block(&cur, b, map)?;
            }
            x = Some(cur);
        }
        let finest = x.expect("at least one level");
        let logits = self.params.head.apply_map(&finest)?;
        let depth: Vec<f32> = logits.data().iter().map(|&v| softplus(v)).collect();
        let depth = FeatureMap::new(logits.height(), logits.width(), 1, depth)?;
        Ok(upsample_bilinear(&depth, 4))
    }
}

/// Build fast-path maps for the pyramid and run the decoder once.
pub fn decoder_forward(
    pyramid: &[FeatureMap],
    cfg: &DecoderConfig,
    params: &DecoderParams,
) -> Result<FeatureMap> {
    let finest = pyramid
        .first()
        .ok_or_else(|| Error::shape("empty pyramid"))?;
    let grid = ErpGridSpec::new(finest.height(), finest.width())?;
    Decoder::new(cfg.clone(), params.clone(), grid)?.forward(pyramid)
}

/// Seeded encoder-like feature pyramid for demos and tests.
pub fn random_pyramid(cfg: &DecoderConfig, finest: ErpGridSpec, seed: u64) -> Vec<FeatureMap> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..cfg.levels)
        .map(|l| {
            FeatureMap::random(
                finest.height >> l,
                finest.width >> l,
                cfg.channels[l],
                -1.0,
                1.0,
                &mut rng,
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn cpe_zero_and_identity_kernels() {
        let f = FeatureMap::random(4, 6, 2, -1.0, 1.0, &mut rng(1));
        assert_eq!(cpe(&f, &[0.0; 18]).unwrap(), f);
        let mut k = [0.0f32; 18];
        k[4] = 1.0;
        k[13] = 1.0;
        let out = cpe(&f, &k).unwrap();
        for (o, i) in out.data().iter().zip(f.data()) {
            assert_eq!(*o, 2.0 * i);
        }
    }

    #[test]
    fn cpe_wraps_at_seam() {
        // 1x3 ramp [1, 2, 3]; horizontal taps (a, b, c) = (1, 10, 100).
        let f = FeatureMap::new(1, 3, 1, vec![1.0, 2.0, 3.0]).unwrap();
        let mut k = [0.0f32; 9];
        k[3] = 1.0;
        k[4] = 10.0;
        k[5] = 100.0;
        let out = cpe(&f, &k).unwrap();
        // Column 0 reads its left neighbour from column 2: 1 + (3 + 10 + 200).
        assert_eq!(out.data()[0], 214.0);
        // Column 2 reads its right neighbour from column 0: 3 + (2 + 30 + 100).
        assert_eq!(out.data()[2], 135.0);
    }

    #[test]
    fn cpe_zero_pads_vertically() {
        let f = FeatureMap::new(2, 2, 1, vec![1.0, 1.0, 1.0, 1.0]).unwrap();
        let mut k = [0.0f32; 9];
        k[1] = 1.0; // the tap above
        let out = cpe(&f, &k).unwrap();
        assert_eq!(out.data(), &[1.0, 1.0, 2.0, 2.0]);
        assert!(matches!(cpe(&f, &[0.0; 4]), Err(Error::Shape(_))));
    }

    #[test]
    fn psi_constant_input_is_constant() {
        let g = ErpGridSpec::new(8, 16).unwrap();
        let map = build_index_map_fast(&g, &TemplateConfig::square(g, 4, 1).unwrap()).unwrap();
        let f = FeatureMap::from_fn(8, 16, 4, |_, _, ch| ch as f32 * 0.5 - 0.3);
        let p = AttentionParams::random(4, 2, &mut rng(5));
        let out = psi_forward(&f, &p, &map).unwrap();
        for ch in 0..4 {
            let first = out.get(0, 0, ch);
            for r in 0..8 {
                for c in 0..16 {
                    assert!((out.get(r, c, ch) - first).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn psi_polar_windows_differ_from_plain_attention() {
        let g = ErpGridSpec::new(8, 16).unwrap();
        let map = build_index_map_fast(&g, &TemplateConfig::square(g, 4, 1).unwrap()).unwrap();
        let f = FeatureMap::random(8, 16, 4, -1.0, 1.0, &mut rng(11));
        let p = AttentionParams::random(4, 2, &mut rng(12));
        let out = psi_forward(&f, &p, &map).unwrap();
        assert!(out.data().iter().all(|v| v.is_finite()));
        let plain = window_attention(&f, &p, 4, 4).unwrap();
        assert!(out.max_abs_diff(&plain) > 1e-4);
        let w = psi_attention(&f, &p, &map).unwrap();
        for row in w.chunks_exact(16) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn psi_equator_row_matches_plain_attention() {
        let g = ErpGridSpec::new(12, 24).unwrap();
        let map = build_index_map_fast(&g, &TemplateConfig::square(g, 4, 1).unwrap()).unwrap();
        let f = FeatureMap::random(12, 24, 4, -1.0, 1.0, &mut rng(21));
        let p = AttentionParams::random(4, 2, &mut rng(22));
        let out = psi_forward(&f, &p, &map).unwrap();
        let plain = window_attention(&f, &p, 4, 4).unwrap();
        let mut polar_diff = 0.0f32;
        for r in 0..12 {
            for c in 0..24 {
                for ch in 0..4 {
                    let d = (out.get(r, c, ch) - plain.get(r, c, ch)).abs();
                    if (4..8).contains(&r) {
                        assert!(d <= 1e-5);
                    } else {
                        polar_diff = polar_diff.max(d);
                    }
                }
            }
        }
        assert!(polar_diff > 1e-4);
    }

    #[test]
    fn psi_rejects_dilated_or_mismatched_maps() {
        let g = ErpGridSpec::new(8, 16).unwrap();
        let dilated = build_index_map_fast(&g, &TemplateConfig::square(g, 2, 2).unwrap()).unwrap();
        let f = FeatureMap::zeros(8, 16, 4);
        let p = AttentionParams::identity(4, 1);
        assert!(matches!(psi_forward(&f, &p, &dilated), Err(Error::Shape(_))));
        let map = IndexMap::identity(g, 4, 4).unwrap();
        let small = FeatureMap::zeros(4, 16, 4);
        assert!(matches!(psi_forward(&small, &p, &map), Err(Error::Shape(_))));
    }

    #[test]
    fn zero_block_is_identity() {
        let g = ErpGridSpec::new(16, 32).unwrap();
        let map = build_index_map_fast(&g, &TemplateConfig::square(g, 4, 1).unwrap()).unwrap();
        let f = FeatureMap::random(16, 32, 8, -1.0, 1.0, &mut rng(2));
        let out = sfcrf_block(&f, &BlockParams::zeros(8, 4, 1), &map).unwrap();
        assert_eq!(out.height(), 16);
        assert_eq!(out.channels(), 8);
        assert!(out.max_abs_diff(&f) <= 1e-6);
    }

    #[test]
    fn two_blocks_compose() {
        let g = ErpGridSpec::new(16, 32).unwrap();
        let map = build_index_map_fast(&g, &TemplateConfig::square(g, 4, 1).unwrap()).unwrap();
        let f = FeatureMap::random(16, 32, 8, -1.0, 1.0, &mut rng(3));
        let mut r = rng(4);
        let b1 = BlockParams::random(8, 4, 2, &mut r);
        let b2 = BlockParams::random(8, 4, 2, &mut r);
        let out = sfcrf_block(&sfcrf_block(&f, &b1, &map).unwrap(), &b2, &map).unwrap();
        assert!(out.same_shape(&f));
        assert!(out.data().iter().all(|v| v.is_finite()));
        assert!(out.max_abs_diff(&f) > 0.0);
    }

    #[test]
    fn softplus_and_gelu() {
        assert!((softplus(0.0) - core::f32::consts::LN_2).abs() < 1e-7);
        assert!(softplus(-30.0) > 0.0);
        assert!((softplus(100.0) - 100.0).abs() < 1e-4);
        assert_eq!(gelu(0.0), 0.0);
        assert!((gelu(1.0) - 0.841_344_7).abs() < 1e-6);
    }

    #[test]
    fn bilinear_upsample_of_constant() {
        let f = FeatureMap::from_fn(2, 4, 1, |_, _, _| 3.0);
        let up = upsample_bilinear(&f, 4);
        assert_eq!((up.height(), up.width()), (8, 16));
        assert!(up.data().iter().all(|&v| (v - 3.0).abs() < 1e-6));
    }

    #[test]
    fn decoder_shape_positivity_and_determinism() {
        let cfg = DecoderConfig::new(vec![8, 8, 16, 16], 7);
        let params = DecoderParams::init(&cfg).unwrap();
        let finest = ErpGridSpec::new(16, 32).unwrap();
        let pyr = random_pyramid(&cfg, finest, 99);
        assert_eq!((pyr[3].height(), pyr[3].width()), (2, 4));
        let a = decoder_forward(&pyr, &cfg, &params).unwrap();
        let b = decoder_forward(&pyr, &cfg, &params).unwrap();
        assert_eq!((a.height(), a.width(), a.channels()), (64, 128, 1));
        assert!(a.data().iter().all(|&v| v > 0.0));
        assert_eq!(a, b);
    }

    #[test]
    fn decoder_uses_the_transform() {
        let cfg = DecoderConfig::new(vec![8, 8, 16, 16], 7);
        let params = DecoderParams::init(&cfg).unwrap();
        let finest = ErpGridSpec::new(16, 32).unwrap();
        let pyr = random_pyramid(&cfg, finest, 5);
        let swt = Decoder::new(cfg.clone(), params.clone(), finest).unwrap();
        let plain = Decoder::with_identity_maps(cfg, params, finest).unwrap();
        let diff = swt.forward(&pyr).unwrap().max_abs_diff(&plain.forward(&pyr).unwrap());
        assert!(diff > 0.0);
    }

    #[test]
    fn decoder_rejects_bad_pyramid() {
        let cfg = DecoderConfig::new(vec![8, 8], 1);
        let params = DecoderParams::init(&cfg).unwrap();
        let pyr = vec![FeatureMap::zeros(8, 16, 8), FeatureMap::zeros(8, 16, 8)];
        assert!(matches!(decoder_forward(&pyr, &cfg, &params), Err(Error::Shape(_))));
        assert!(matches!(decoder_forward(&[], &cfg, &params), Err(Error::Shape(_))));
    }
}
