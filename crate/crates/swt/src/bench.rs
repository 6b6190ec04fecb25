//! Timing of SWT map generation against per-pixel baselines.
//!
//! Baselines:
//!
//! * `tangent_kK`: a `K×K` gnomonic tangent-plane grid around every ERP pixel,
//!   quantized to pixel indices.
//! * `cubemap`: six cube faces of size `H/2`, with ERP→face and face→ERP
//!   gather maps.

use std::hint::black_box;
use std::time::Instant;

use swt_core::geom::{gnomonic_grid, isp, pixel_to_angle, UnitVec3};
use swt_core::swt::{build_index_map_naive_with, quantize, quantize_grid, MapOptions};
use swt_core::{ErpGridSpec, TemplateConfig};

use crate::error::{Result, ToolError};
use crate::parallel::build_index_map_fast_par;
use crate::report::{BenchCase, BenchReport};

/// `(median, min)` wall time in seconds over `reps` runs of `f`.
pub fn time_reps<T>(reps: usize, mut f: impl FnMut() -> Result<T>) -> Result<(f64, f64)> {
    if reps == 0 {
        return Err(ToolError::Usage("repetitions must be at least 1".into()));
    }
    let mut times = Vec::with_capacity(reps);
    for _ in 0..reps {
        let t0 = Instant::now();
        black_box(f()?);
        times.push(t0.elapsed().as_secs_f64());
    }
    times.sort_by(f64::total_cmp);
    let median = swt_core::metrics::median(&times).unwrap_or(0.0);
    Ok((median, times[0]))
}

/// Time the fast and naive map builds for one configuration. The two maps
/// are compared once before timing; a mismatch is an error.
pub fn bench_swt(cfg: &TemplateConfig, reps: usize, threads: usize) -> Result<BenchReport> {
    let g = cfg.grid;
    let opts = MapOptions::default();
    let (fast, fast_stats) = build_index_map_fast_par(&g, cfg, opts, threads)?;
    let (naive, naive_stats) = build_index_map_naive_with(&g, cfg, opts)?;
    if fast != naive {
        return Err(ToolError::format("fast and naive SWT maps differ"));
    }
    drop((fast, naive));
    let size = cfg.m_rows.max(cfg.m_cols);
    let (fm, fmin) = time_reps(reps, || build_index_map_fast_par(&g, cfg, opts, threads))?;
    let (nm, nmin) = time_reps(reps, || Ok(build_index_map_naive_with(&g, cfg, opts)?))?;
    let case = |name: &str, median_s, min_s, transforms: usize, threads| BenchCase {
        name: name.into(),
        height: g.height,
        width: g.width,
        size,
        reps,
        median_s,
        min_s,
        transforms: transforms as u64,
        threads,
    };
    Ok(BenchReport {
        cases: vec![
            case("swt_fast", fm, fmin, fast_stats.window_transforms, threads),
            case("swt_naive", nm, nmin, naive_stats.window_transforms, 1),
        ],
    })
}

/// Gather indices of a `k×k` tangent grid around every pixel, folded into a
/// checksum so the work cannot be skipped.
pub fn tangent_pass(g: &ErpGridSpec, k: usize) -> Result<u64> {
    let step = g.lat_step();
    let mut acc = 0u64;
    for u in 0..g.height {
        for v in 0..g.width {
            let c = pixel_to_angle(u as f64, v as f64, g)?;
            let grid = gnomonic_grid(&c, k, step)?;
            for i in quantize_grid(&grid, g) {
                acc = acc.wrapping_mul(31).wrapping_add(i as u64);
            }
        }
    }
    Ok(acc)
}

/// Direction of texel `(i, j)` on cube face `face` of size `n`.
fn cube_dir(face: usize, i: usize, j: usize, n: usize) -> UnitVec3 {
    let a = 2.0 * (j as f64 + 0.5) / n as f64 - 1.0;
    let b = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
    let (x, y, z) = match face {
        0 => (1.0, a, b),
        1 => (-a, 1.0, b),
        2 => (-1.0, -a, b),
        3 => (a, -1.0, b),
        4 => (-b, a, 1.0),
        _ => (b, a, -1.0),
    };
    UnitVec3::new(x, y, z).expect("cube directions are non-zero")
}

/// Face and texel hit by a direction.
fn cube_texel(p: &UnitVec3, n: usize) -> usize {
    let (ax, ay, az) = (p.x.abs(), p.y.abs(), p.z.abs());
    let (face, a, b) = if ax >= ay && ax >= az {
        if p.x > 0.0 {
            (0, p.y / ax, p.z / ax)
        } else {
            (2, -p.y / ax, p.z / ax)
        }
    } else if ay >= az {
        if p.y > 0.0 {
            (1, -p.x / ay, p.z / ay)
        } else {
            (3, p.x / ay, p.z / ay)
        }
    } else if p.z > 0.0 {
        (4, p.y / az, -p.x / az)
    } else {
        (5, p.y / az, p.x / az)
    };
    let to_idx = |t: f64| (((t + 1.0) / 2.0 * n as f64) as usize).min(n - 1);
    let j = to_idx(a);
    let i = to_idx(-b);
    (face * n + i) * n + j
}

/// ERP→cube and cube→ERP gather maps at face size `H/2`.
pub fn cubemap_pass(g: &ErpGridSpec) -> Result<(Vec<u32>, Vec<u32>)> {
    let n = (g.height / 2).max(1);
    let mut to_face = Vec::with_capacity(6 * n * n);
    for face in 0..6 {
        for i in 0..n {
            for j in 0..n {
                let (r, c) = quantize(&isp(&cube_dir(face, i, j, n))?, g);
                to_face.push((r * g.width + c) as u32);
            }
        }
    }
    let mut to_erp = Vec::with_capacity(g.pixel_count());
    for u in 0..g.height {
        for v in 0..g.width {
            let a = pixel_to_angle(u as f64, v as f64, g)?;
            to_erp.push(cube_texel(&swt_core::geom::sp(&a), n) as u32);
        }
    }
    Ok((to_face, to_erp))
}

/// Time the tangent baseline for every kernel size and the cube-map baseline.
pub fn bench_baselines(g: &ErpGridSpec, kernels: &[usize], reps: usize) -> Result<BenchReport> {
    let mut cases = Vec::new();
    for &k in kernels {
        let (m, min) = time_reps(reps, || tangent_pass(g, k))?;
        cases.push(BenchCase {
            name: format!("tangent_k{k}"),
            height: g.height,
            width: g.width,
            size: k,
            reps,
            median_s: m,
            min_s: min,
            transforms: g.pixel_count() as u64,
            threads: 1,
        });
    }
    let (m, min) = time_reps(reps, || cubemap_pass(g))?;
    let n = (g.height / 2).max(1);
    cases.push(BenchCase {
        name: "cubemap".into(),
        height: g.height,
        width: g.width,
        size: n,
        reps,
        median_s: m,
        min_s: min,
        transforms: (6 * n * n + g.pixel_count()) as u64,
        threads: 1,
    });
    Ok(BenchReport { cases })
}
