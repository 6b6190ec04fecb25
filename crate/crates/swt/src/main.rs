use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use sha2::{Digest, Sha256};
use swt_core::crf::{random_pyramid, DecoderConfig, DecoderParams};
use swt_core::metrics::{evaluate, silog, DepthPair, SILOG_ALPHA, SILOG_LAMBDA};
use swt_core::swt::{build_index_map_naive_with, sample, MapOptions, SampleMode};
use swt_core::tensor::merge_windows;
use swt_core::{ErpGridSpec, FeatureMap, TemplateConfig};
use swt_tools::io::{bundle, fmap, pfm, raster, swtm};
use swt_tools::parallel::{build_index_map_fast_par, decoder_par};
use swt_tools::report::{BenchReport, MetricsReport};
use swt_tools::{bench, Result, ToolError};

/// Spherical window transform tools.
///
/// `--config FILE` reads `key=value` lines and applies them as
/// `--key value` options before the ones given on the command line.
#[derive(Parser)]
#[command(name = "swt", version, args_override_self = true)]
struct Cli {
    /// Options file with `key=value` lines.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Nearest,
    Bilinear,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Kv,
}

#[derive(clap::Args)]
struct WindowArgs {
    /// Square window size in nodes.
    #[arg(long, default_value_t = 8)]
    window: usize,
    #[arg(long)]
    window_rows: Option<usize>,
    #[arg(long)]
    window_cols: Option<usize>,
    #[arg(long, default_value_t = 1)]
    dilation: usize,
    /// Rotate every window instead of rolling one per window-row.
    #[arg(long)]
    naive: bool,
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

impl WindowArgs {
    fn config(&self, g: ErpGridSpec) -> Result<TemplateConfig> {
        let mr = self.window_rows.unwrap_or(self.window);
        let mc = self.window_cols.unwrap_or(self.window);
        Ok(TemplateConfig::new(g, mr, mc, self.dilation)?)
    }

    fn build(&self, g: ErpGridSpec, keep_coords: bool) -> Result<(swt_core::IndexMap, usize)> {
        let cfg = self.config(g)?;
        cfg.window_layout()?;
        let opts = MapOptions { keep_coords };
        let (map, stats) = if self.naive {
            build_index_map_naive_with(&g, &cfg, opts)?
        } else {
            build_index_map_fast_par(&g, &cfg, opts, self.threads)?
        };
        Ok((map, stats.window_transforms))
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate an SWT index map and write it as SWTM.
    Map {
        #[arg(long, default_value_t = 512)]
        height: usize,
        #[arg(long, default_value_t = 1024)]
        width: usize,
        #[command(flatten)]
        win: WindowArgs,
        /// Store continuous node coordinates for bilinear sampling.
        #[arg(long)]
        coords: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Resample an image or FMAP tensor into SWT windows, laid out window by
    /// window in a map of the input size.
    Transform {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[command(flatten)]
        win: WindowArgs,
        #[arg(long, value_enum, default_value = "nearest")]
        mode: Mode,
    },
    /// Run the randomly initialized decoder on a seeded feature pyramid.
    DemoForward {
        /// Output depth height; the finest pyramid level is a quarter of it.
        #[arg(long, default_value_t = 64)]
        height: usize,
        #[arg(long, default_value_t = 128)]
        width: usize,
        #[arg(long, value_delimiter = ',', default_value = "8,8,16,16")]
        channels: Vec<usize>,
        #[arg(long, default_value_t = 4)]
        window: usize,
        #[arg(long, default_value_t = 4)]
        ratio: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        threads: usize,
        /// Write the depth map (FMAP, or PFM by extension).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Load parameters from a bundle directory instead of initializing.
        #[arg(long)]
        params: Option<PathBuf>,
        /// Save the parameters used to a bundle directory.
        #[arg(long)]
        save_params: Option<PathBuf>,
    },
    /// Depth metrics of a prediction against ground truth.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Divisor turning 16-bit PNG samples into depth.
        #[arg(long, default_value_t = 256.0)]
        png_scale: f64,
        /// Median-align the prediction first.
        #[arg(long)]
        align: bool,
        /// Ground truth at or below this value is unobserved.
        #[arg(long, default_value_t = 0.0)]
        min_gt: f64,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Time SWT map generation and the per-pixel baselines.
    Bench {
        #[arg(long, default_value_t = 512)]
        height: usize,
        #[arg(long, default_value_t = 1024)]
        width: usize,
        /// Window sizes to time.
        #[arg(long, value_delimiter = ',', default_value = "8")]
        window: Vec<usize>,
        #[arg(long, default_value_t = 1)]
        dilation: usize,
        #[arg(long, default_value_t = 5)]
        reps: usize,
        #[arg(long, value_delimiter = ',', default_value = "3,5,7,9")]
        kernels: Vec<usize>,
        #[arg(long, default_value_t = 1)]
        threads: usize,
        #[arg(long)]
        skip_baselines: bool,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        kv: Option<PathBuf>,
    },
}

/// Splice `--config` options in right after the subcommand name so that
/// explicit flags, which come later, take precedence.
fn expand_config(args: Vec<String>) -> Result<Vec<String>> {
    let mut rest = Vec::with_capacity(args.len());
    let mut file = None;
    let mut it = args.into_iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            file = Some(it.next().ok_or_else(|| ToolError::Usage("--config needs a file".into()))?);
        } else if let Some(f) = a.strip_prefix("--config=") {
            file = Some(f.to_string());
        } else {
            rest.push(a);
        }
    }
    let Some(file) = file else { return Ok(rest) };
    let text = std::fs::read_to_string(&file)?;
    let mut injected = Vec::new();
    for line in text.lines().map(str::trim) {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| ToolError::Usage(format!("config line is not key=value: {line:?}")))?;
        let key = format!("--{}", k.trim().replace('_', "-"));
        match v.trim() {
            "true" => injected.push(key),
            "false" => {}
            v => injected.extend([key, v.to_string()]),
        }
    }
    // First positional after the binary name is the subcommand.
    let pos = rest.iter().skip(1).position(|a| !a.starts_with('-')).map(|p| p + 2);
    let at = pos.ok_or_else(|| ToolError::Usage("--config needs a subcommand".into()))?;
    rest.splice(at..at, injected);
    Ok(rest)
}

fn ext(p: &Path) -> String {
    p.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase()
}

fn read_depth(p: &Path, png_scale: f64) -> Result<FeatureMap> {
    let f = match ext(p).as_str() {
        "pfm" => pfm::read(p)?,
        "png" => {
            let (f, _) = raster::read_png(p)?;
            let data = f.data().iter().map(|&v| (v as f64 / png_scale) as f32).collect();
            FeatureMap::new(f.height(), f.width(), f.channels(), data)?
        }
        _ => fmap::read(p)?,
    };
    if f.channels() != 1 {
        return Err(ToolError::Format(format!("{} has {} channels, expected 1", p.display(), f.channels())));
    }
    Ok(f)
}

fn write_map(p: &Path, f: &FeatureMap) -> Result<()> {
    match ext(p).as_str() {
        "pfm" => pfm::write(p, f),
        _ => fmap::write(p, f),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Map { height, width, win, coords, out } => {
            let g = ErpGridSpec::new(height, width)?;
            let (map, transforms) = win.build(g, coords)?;
            swtm::write(&out, &map)?;
            println!(
                "windows={}x{} nodes={} transforms={} out={}",
                map.n_h(),
                map.n_w(),
                map.nodes_per_window(),
                transforms,
                out.display()
            );
        }
        Cmd::Transform { input, output, win, mode } => {
            let (f, depth) = match ext(&input).as_str() {
                "png" => {
                    let (f, d) = raster::read_png(&input)?;
                    (f, Some(d))
                }
                _ => (fmap::read(&input)?, None),
            };
            let g = ErpGridSpec::new(f.height(), f.width())?;
            let bilinear = matches!(mode, Mode::Bilinear);
            let (map, _) = win.build(g, bilinear)?;
            let mode = if bilinear { SampleMode::Bilinear } else { SampleMode::Nearest };
            let out = merge_windows(&sample(&f, &map, mode)?)?;
            match (ext(&output).as_str(), depth) {
                ("png", d) => raster::write_png(&output, &out, d.unwrap_or(raster::BitDepth::Sixteen))?,
                _ => fmap::write(&output, &out)?,
            }
        }
        Cmd::DemoForward { height, width, channels, window, ratio, seed, threads, out, params, save_params } => {
            if height % 4 != 0 || width % 4 != 0 {
                return Err(ToolError::Usage("output size must be a multiple of 4".into()));
            }
            let (cfg, p) = match params {
                Some(dir) => bundle::load(&dir)?,
                None => {
                    let mut cfg = DecoderConfig::new(channels, seed);
                    cfg.window = window;
                    cfg.ratio = ratio;
                    let p = DecoderParams::init(&cfg)?;
                    (cfg, p)
                }
            };
            if let Some(dir) = save_params {
                bundle::save(&dir, &cfg, &p)?;
            }
            let finest = ErpGridSpec::new(height / 4, width / 4)?;
            let pyramid = random_pyramid(&cfg, finest, cfg.seed);
            let depth = decoder_par(cfg, p, finest, threads)?.forward(&pyramid)?;
            let digest = hex::encode(Sha256::digest(fmap::encode(&depth)));
            let (lo, hi) = depth
                .data()
                .iter()
                .fold((f32::INFINITY, f32::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
            println!(
                "shape={}x{}x{} min={lo} max={hi} sha256={digest}",
                depth.height(),
                depth.width(),
                depth.channels()
            );
            if let Some(out) = out {
                write_map(&out, &depth)?;
            }
        }
        Cmd::Eval { pred, gt, png_scale, align, min_gt, format, out } => {
            if !(png_scale.is_finite() && png_scale > 0.0) {
                return Err(ToolError::Usage("--png-scale must be positive".into()));
            }
            let p = read_depth(&pred, png_scale)?;
            let g = read_depth(&gt, png_scale)?;
            if !p.same_shape(&g) {
                return Err(swt_core::Error::Shape("prediction and ground truth differ in size".into()).into());
            }
            let pair = DepthPair::from_f32(p.data(), g.data(), min_gt)?;
            let metrics = evaluate(&pair, align)?;
            let silog = silog(&pair, SILOG_ALPHA, SILOG_LAMBDA)?;
            let report = MetricsReport { metrics, silog, observed: pair.observed() };
            let text = match format {
                Format::Text => report.to_text(),
                Format::Kv => report.to_kv(),
            };
            match out {
                Some(path) => std::fs::write(path, text)?,
                None => print!("{text}"),
            }
        }
        Cmd::Bench { height, width, window, dilation, reps, kernels, threads, skip_baselines, csv, kv } => {
            let g = ErpGridSpec::new(height, width)?;
            let mut report = BenchReport::default();
            for &m in &window {
                let cfg = TemplateConfig::square(g, m, dilation)?;
                report.extend(bench::bench_swt(&cfg, reps, threads)?);
            }
            if !skip_baselines {
                report.extend(bench::bench_baselines(&g, &kernels, reps)?);
            }
            print!("{}", report.summary());
            for &m in &window {
                if let Some(s) = report.speedup(height, width, m) {
                    println!("speedup window {m}: {s:.2}x");
                }
            }
            if let Some(path) = csv {
                std::fs::write(path, report.to_csv()?)?;
            }
            if let Some(path) = kv {
                std::fs::write(path, report.to_kv())?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = match expand_config(std::env::args().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(2);
        }
    };
    let cli = Cli::parse_from(args);
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::FAILURE
        }
    }
}
