//! Spherical window transform.
//!
//! A template of `m_rows × m_cols` nodes is laid out around the equator point
//! `(0, 0)` with the ERP pixel spacing, rotated onto every window center and
//! quantized to pixel indices. Rotations are split into pitch then yaw, and a
//! yaw is an exact longitude shift, so all windows of one window-row share the
//! same node pattern up to a horizontal roll. [`build_index_map_fast`] exploits
//! that: it transforms only the first window of each row and rolls the rest.
//! [`build_index_map_naive`] rotates every window independently and is kept as
//! the reference the fast path must reproduce bit for bit.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::geom::{
    angle_to_pixel, isp, pixel_to_angle, rotation_for, sp, wrap_lon, AngleCoord, ErpGridSpec,
    RotationMatrix, UnitVec3,
};
use crate::math;
use crate::tensor::{FeatureMap, WindowSet};

/// Half-pixel ties closer than this are resolved upward, which keeps
/// quantization consistent under integer column shifts and the seam wrap.
const TIE_EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TemplateConfig {
    pub m_rows: usize,
    pub m_cols: usize,
    pub dilation: usize,
    pub grid: ErpGridSpec,
}

impl TemplateConfig {
    pub fn new(grid: ErpGridSpec, m_rows: usize, m_cols: usize, dilation: usize) -> Result<Self> {
        let cfg = TemplateConfig {
            m_rows,
            m_cols,
            dilation,
            grid,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Square `m × m` template.
    pub fn square(grid: ErpGridSpec, m: usize, dilation: usize) -> Result<Self> {
        Self::new(grid, m, m, dilation)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m_rows == 0 || self.m_cols == 0 {
            return Err(Error::config("template needs at least one node per side"));
        }
        if self.dilation == 0 {
            return Err(Error::config("dilation must be at least 1"));
        }
        let (rows_px, cols_px) = self.window_px();
        if rows_px > self.grid.height || cols_px > self.grid.width {
            return Err(Error::config("template extent exceeds the ERP grid"));
        }
        Ok(())
    }

    /// Pixel extent `(rows, cols)` of one window.
    pub fn window_px(&self) -> (usize, usize) {
        (self.m_rows * self.dilation, self.m_cols * self.dilation)
    }

    /// Window layout `(nH, nW)`; the window extent must tile the grid.
    pub fn window_layout(&self) -> Result<(usize, usize)> {
        self.validate()?;
        let (rows_px, cols_px) = self.window_px();
        if self.grid.height % rows_px != 0 || self.grid.width % cols_px != 0 {
            return Err(Error::config(alloc::format!(
                "window extent {}x{} does not divide the {}x{} ERP grid",
                rows_px,
                cols_px,
                self.grid.height,
                self.grid.width
            )));
        }
        Ok((self.grid.height / rows_px, self.grid.width / cols_px))
    }

    pub fn nodes(&self) -> usize {
        self.m_rows * self.m_cols
    }
}

/// The equator window: node angles and their unit vectors, row-major with
/// row 0 northernmost.
#[derive(Debug, Clone, PartialEq)]
pub struct Template {
    pub rows: usize,
    pub cols: usize,
    pub nodes: Vec<AngleCoord>,
    pub vectors: Vec<UnitVec3>,
}

impl Template {
    pub fn node(&self, i: usize, j: usize) -> AngleCoord {
        self.nodes[i * self.cols + j]
    }
}

/// Continuous node positions of one transformed window.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleGrid {
    pub rows: usize,
    pub cols: usize,
    pub coords: Vec<AngleCoord>,
}

impl SampleGrid {
    pub fn get(&self, i: usize, j: usize) -> AngleCoord {
        self.coords[i * self.cols + j]
    }
}

/// Build the equator template for `cfg`.
///
/// Node `(i, j)` sits at latitude `-Δlat·d·(i - (m_rows-1)/2)` and longitude
/// `Δlon·d·(j - (m_cols-1)/2)`, so rows follow the ERP pixel order.
pub fn build_template(cfg: &TemplateConfig) -> Result<Template> {
    cfg.validate()?;
    let d = cfg.dilation as f64;
    let dlat = cfg.grid.lat_step() * d;
    let dlon = cfg.grid.lon_step() * d;
    let rc = (cfg.m_rows as f64 - 1.0) / 2.0;
    let cc = (cfg.m_cols as f64 - 1.0) / 2.0;
    let mut nodes = Vec::with_capacity(cfg.nodes());
    for i in 0..cfg.m_rows {
        let lat = -dlat * (i as f64 - rc);
        for j in 0..cfg.m_cols {
            nodes.push(AngleCoord {
                lat,
                lon: dlon * (j as f64 - cc),
            });
        }
    }
    let vectors = nodes.iter().map(sp).collect();
    Ok(Template {
        rows: cfg.m_rows,
        cols: cfg.m_cols,
        nodes,
        vectors,
    })
}

fn transform_with(t: &Template, r: &RotationMatrix) -> SampleGrid {
    let coords = t
        .vectors
        .iter()
        .map(|p| isp(&r.apply(p)).expect("rotated unit vector is never zero"))
        .collect();
    SampleGrid {
        rows: t.rows,
        cols: t.cols,
        coords,
    }
}

/// Rotate the template so its center lands on `center`.
pub fn transform_window(t: &Template, center: &AngleCoord) -> SampleGrid {
    transform_with(t, &rotation_for(center))
}

/// Nearest pixel `(row, col)` of an angle. Rows are clamped, columns wrap.
pub fn quantize(a: &AngleCoord, spec: &ErpGridSpec) -> (usize, usize) {
    let (u, v) = angle_to_pixel(a, spec);
    let row = math::floor(u + 0.5 + TIE_EPS).clamp(0.0, spec.height as f64 - 1.0) as usize;
    let col = math::rem_euclid(math::floor(v + 0.5 + TIE_EPS), spec.width as f64) as usize;
    (row, col % spec.width)
}

/// Flat pixel indices of a sample grid, row-major.
pub fn quantize_grid(g: &SampleGrid, spec: &ErpGridSpec) -> Vec<u32> {
    g.coords
        .iter()
        .map(|a| {
            let (r, c) = quantize(a, spec);
            (r * spec.width + c) as u32
        })
        .collect()
}

/// Per-window pixel gather indices.
///
/// Windows are stored row-major by `(window_row, window_col)`; each window
/// holds `m_rows × m_cols` flat indices into the `H × W` grid. Continuous node
/// coordinates are kept alongside when bilinear sampling is needed.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexMap {
    config: TemplateConfig,
    n_h: usize,
    n_w: usize,
    indices: Vec<u32>,
    coords: Option<Vec<AngleCoord>>,
}

impl IndexMap {
    /// Assemble a map from raw parts, checking every invariant.
    pub fn from_parts(
        config: TemplateConfig,
        indices: Vec<u32>,
        coords: Option<Vec<AngleCoord>>,
    ) -> Result<Self> {
        let (n_h, n_w) = config.window_layout()?;
        let expected = n_h * n_w * config.nodes();
        if indices.len() != expected {
            return Err(Error::shape(alloc::format!(
                "index map holds {} indices, expected {}",
                indices.len(),
                expected
            )));
        }
        let limit = config.grid.pixel_count();
        if indices.iter().any(|&i| i as usize >= limit) {
            return Err(Error::domain("index map entry outside the ERP grid"));
        }
        if let Some(c) = &coords {
            if c.len() != expected {
                return Err(Error::shape("coordinate sidecar length does not match indices"));
            }
        }
        Ok(IndexMap {
            config,
            n_h,
            n_w,
            indices,
            coords,
        })
    }

    /// Regular window partition expressed as a gather: every window reads its
    /// own pixels. Dilation is 1.
    pub fn identity(grid: ErpGridSpec, m_rows: usize, m_cols: usize) -> Result<Self> {
        let config = TemplateConfig::new(grid, m_rows, m_cols, 1)?;
        let (n_h, n_w) = config.window_layout()?;
        let mut indices = Vec::with_capacity(grid.pixel_count());
        for wr in 0..n_h {
            for wc in 0..n_w {
                for i in 0..m_rows {
                    for j in 0..m_cols {
                        indices.push(((wr * m_rows + i) * grid.width + wc * m_cols + j) as u32);
                    }
                }
            }
        }
        Self::from_parts(config, indices, None)
    }

    pub fn config(&self) -> &TemplateConfig {
        &self.config
    }

    pub fn grid(&self) -> &ErpGridSpec {
        &self.config.grid
    }

    pub fn n_h(&self) -> usize {
        self.n_h
    }

    pub fn n_w(&self) -> usize {
        self.n_w
    }

    pub fn window_count(&self) -> usize {
        self.n_h * self.n_w
    }

    pub fn nodes_per_window(&self) -> usize {
        self.config.nodes()
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn coords(&self) -> Option<&[AngleCoord]> {
        self.coords.as_deref()
    }

    /// Drop the continuous coordinates.
    pub fn without_coords(mut self) -> Self {
        self.coords = None;
        self
    }

    pub fn window(&self, window_row: usize, window_col: usize) -> &[u32] {
        let n = self.nodes_per_window();
        let start = (window_row * self.n_w + window_col) * n;
        &self.indices[start..start + n]
    }
}

/// Work counters from a map build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BuildStats {
    /// Windows pushed through a full rotation + inverse projection.
    pub window_transforms: usize,
    /// Window columns derived by an integer horizontal roll.
    pub rolls: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MapOptions {
    /// Keep continuous node coordinates for bilinear sampling.
    pub keep_coords: bool,
}

fn check_grid(spec: &ErpGridSpec, cfg: &TemplateConfig) -> Result<(usize, usize)> {
    if *spec != cfg.grid {
        return Err(Error::config("template config refers to a different ERP grid"));
    }
    cfg.window_layout()
}

fn window_center(cfg: &TemplateConfig, window_row: usize, window_col: usize) -> AngleCoord {
    let (rows_px, cols_px) = cfg.window_px();
    let u = (window_row * rows_px) as f64 + (rows_px as f64 - 1.0) / 2.0;
    let v = (window_col * cols_px) as f64 + (cols_px as f64 - 1.0) / 2.0;
    pixel_to_angle(u, v, &cfg.grid).expect("window centers lie inside the grid")
}

/// Rotate every window independently: `nH · nW` transforms.
pub fn build_index_map_naive(spec: &ErpGridSpec, cfg: &TemplateConfig) -> Result<IndexMap> {
    build_index_map_naive_with(spec, cfg, MapOptions::default()).map(|(m, _)| m)
}

pub fn build_index_map_naive_with(
    spec: &ErpGridSpec,
    cfg: &TemplateConfig,
    opts: MapOptions,
) -> Result<(IndexMap, BuildStats)> {
    let (n_h, n_w) = check_grid(spec, cfg)?;
    let template = build_template(cfg)?;
    let total = n_h * n_w * cfg.nodes();
    let mut indices = Vec::with_capacity(total);
    let mut coords = opts.keep_coords.then(|| Vec::with_capacity(total));
    let mut stats = BuildStats::default();
    for wr in 0..n_h {
        for wc in 0..n_w {
            let grid = transform_window(&template, &window_center(cfg, wr, wc));
            stats.window_transforms += 1;
            indices.extend(quantize_grid(&grid, spec));
            if let Some(c) = coords.as_mut() {
                c.extend_from_slice(&grid.coords);
            }
        }
    }
    Ok((IndexMap::from_parts(*cfg, indices, coords)?, stats))
}

/// Transformed first-column window of one window-row, the unit the fast path
/// rolls across the row.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceWindow {
    pub rows: Vec<u32>,
    pub cols: Vec<u32>,
    pub coords: Vec<AngleCoord>,
}

/// Transform the column-0 window of `window_row`.
pub fn reference_window(
    template: &Template,
    cfg: &TemplateConfig,
    window_row: usize,
) -> ReferenceWindow {
    let grid = transform_window(template, &window_center(cfg, window_row, 0));
    let (rows, cols) = grid
        .coords
        .iter()
        .map(|a| {
            let (r, c) = quantize(a, &cfg.grid);
            (r as u32, c as u32)
        })
        .unzip();
    ReferenceWindow {
        rows,
        cols,
        coords: grid.coords,
    }
}

/// Roll one reference window per window-row across all columns.
pub fn assemble_rolled(
    cfg: &TemplateConfig,
    references: &[ReferenceWindow],
    keep_coords: bool,
) -> Result<(IndexMap, BuildStats)> {
    let (n_h, n_w) = cfg.window_layout()?;
    if references.len() != n_h {
        return Err(Error::shape("need one reference window per window-row"));
    }
    let width = cfg.grid.width;
    let (_, cols_px) = cfg.window_px();
    let total = n_h * n_w * cfg.nodes();
    let mut indices = Vec::with_capacity(total);
    let mut coords = keep_coords.then(|| Vec::with_capacity(total));
    let lon_step = cfg.grid.lon_step();
    for reference in references {
        for wc in 0..n_w {
            let shift = wc * cols_px;
            for (&r, &c) in reference.rows.iter().zip(&reference.cols) {
                let col = (c as usize + shift) % width;
                indices.push((r as usize * width + col) as u32);
            }
            if let Some(out) = coords.as_mut() {
                let dlon = lon_step * shift as f64;
                out.extend(reference.coords.iter().map(|a| AngleCoord {
                    lat: a.lat,
                    lon: wrap_lon(a.lon + dlon),
                }));
            }
        }
    }
    let stats = BuildStats {
        window_transforms: n_h,
        rolls: n_h * (n_w - 1),
    };
    Ok((IndexMap::from_parts(*cfg, indices, coords)?, stats))
}

/// Decomposed build: `nH` transforms plus integer rolls. Bit-identical to
/// [`build_index_map_naive`].
pub fn build_index_map_fast(spec: &ErpGridSpec, cfg: &TemplateConfig) -> Result<IndexMap> {
    build_index_map_fast_with(spec, cfg, MapOptions::default()).map(|(m, _)| m)
}

pub fn build_index_map_fast_with(
    spec: &ErpGridSpec,
    cfg: &TemplateConfig,
    opts: MapOptions,
) -> Result<(IndexMap, BuildStats)> {
    let (n_h, _) = check_grid(spec, cfg)?;
    let template = build_template(cfg)?;
    let references: Vec<_> = (0..n_h)
        .map(|wr| reference_window(&template, cfg, wr))
        .collect();
    assemble_rolled(cfg, &references, opts.keep_coords)
}

/// Shift every column index by `pixels` (mod W). Rows are untouched.
pub fn roll_lon(map: &IndexMap, pixels: i64) -> IndexMap {
    let width = map.grid().width;
    let shift = pixels.rem_euclid(width as i64) as usize;
    let indices = map
        .indices
        .iter()
        .map(|&i| {
            let (r, c) = (i as usize / width, i as usize % width);
            (r * width + (c + shift) % width) as u32
        })
        .collect();
    let dlon = map.grid().lon_step() * shift as f64;
    let coords = map.coords.as_ref().map(|cs| {
        cs.iter()
            .map(|a| AngleCoord {
                lat: a.lat,
                lon: wrap_lon(a.lon + dlon),
            })
            .collect()
    });
    IndexMap {
        config: map.config,
        n_h: map.n_h,
        n_w: map.n_w,
        indices,
        coords,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SampleMode {
    #[default]
    Nearest,
    Bilinear,
}

/// Gather `f` through `map` into `nH · nW` windows of `m_rows × m_cols` nodes.
///
/// Bilinear mode needs the map's continuous coordinates and blends the four
/// surrounding pixels, wrapping across the left/right seam.
pub fn sample(f: &FeatureMap, map: &IndexMap, mode: SampleMode) -> Result<WindowSet> {
    let grid = map.grid();
    if f.height() != grid.height || f.width() != grid.width {
        return Err(Error::shape(alloc::format!(
            "feature map is {}x{} but the index map targets {}x{}",
            f.height(),
            f.width(),
            grid.height,
            grid.width
        )));
    }
    let c = f.channels();
    let cfg = map.config();
    let mut data = vec![0.0f32; map.indices.len() * c];
    match mode {
        SampleMode::Nearest => {
            for (out, &idx) in data.chunks_exact_mut(c).zip(&map.indices) {
                out.copy_from_slice(f.pixel_flat(idx as usize));
            }
        }
        SampleMode::Bilinear => {
            let coords = map.coords().ok_or_else(|| {
                Error::config("bilinear sampling needs an index map built with coordinates")
            })?;
            let (h, w) = (grid.height, grid.width);
            for (out, a) in data.chunks_exact_mut(c).zip(coords) {
                let (u, v) = angle_to_pixel(a, grid);
                let (u0, v0) = (math::floor(u), math::floor(v));
                let (fu, fv) = (u - u0, v - v0);
                let r0 = (u0 as i64).clamp(0, h as i64 - 1) as usize;
                let r1 = (u0 as i64 + 1).clamp(0, h as i64 - 1) as usize;
                let c0 = (v0 as i64).rem_euclid(w as i64) as usize;
                let c1 = (v0 as i64 + 1).rem_euclid(w as i64) as usize;
                let taps = [
                    (r0, c0, (1.0 - fu) * (1.0 - fv)),
                    (r0, c1, (1.0 - fu) * fv),
                    (r1, c0, fu * (1.0 - fv)),
                    (r1, c1, fu * fv),
                ];
                for (ch, o) in out.iter_mut().enumerate() {
                    let acc: f64 = taps
                        .iter()
                        .map(|&(r, cc, wgt)| wgt * f.get(r, cc, ch) as f64)
                        .sum();
                    *o = acc as f32;
                }
            }
        }
    }
    WindowSet::new(map.n_h, map.n_w, cfg.m_rows, cfg.m_cols, c, data)
}
