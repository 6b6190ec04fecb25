//! Multi-threaded map generation. Work is split by window-row and the
//! results are assembled in row order, so the output does not depend on the
//! thread count.

use rayon::prelude::*;
use swt_core::crf::{Decoder, DecoderConfig, DecoderParams};
use swt_core::swt::{assemble_rolled, build_template, reference_window, BuildStats, MapOptions};
use swt_core::{ErpGridSpec, IndexMap, TemplateConfig};

use crate::error::{Result, ToolError};

fn pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| ToolError::Usage(format!("cannot start thread pool: {e}")))
}

/// Fast-path map with the per-row reference windows computed on `threads`
/// worker threads.
pub fn build_index_map_fast_par(
    spec: &ErpGridSpec,
    cfg: &TemplateConfig,
    opts: MapOptions,
    threads: usize,
) -> Result<(IndexMap, BuildStats)> {
    if *spec != cfg.grid {
        return Err(swt_core::Error::Config("template config refers to a different ERP grid".into()).into());
    }
    let (n_h, _) = cfg.window_layout()?;
    let template = build_template(cfg)?;
    let references = pool(threads)?.install(|| {
        (0..n_h)
            .into_par_iter()
            .map(|wr| reference_window(&template, cfg, wr))
            .collect::<Vec<_>>()
    });
    Ok(assemble_rolled(cfg, &references, opts.keep_coords)?)
}

/// Decoder whose per-level maps are generated on `threads` threads.
pub fn decoder_par(
    cfg: DecoderConfig,
    params: DecoderParams,
    finest: ErpGridSpec,
    threads: usize,
) -> Result<Decoder> {
    cfg.validate()?;
    let mut maps = Vec::with_capacity(cfg.levels);
    for l in 0..cfg.levels {
        let g = ErpGridSpec::new(finest.height >> l, finest.width >> l)?;
        let (mr, mc) = cfg.level_window(g.height, g.width);
        let tc = TemplateConfig::new(g, mr, mc, 1)?;
        maps.push(build_index_map_fast_par(&g, &tc, MapOptions::default(), threads)?.0);
    }
    Ok(Decoder::with_maps(cfg, params, maps)?)
}
