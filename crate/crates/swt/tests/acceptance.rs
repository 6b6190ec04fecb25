//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::f64::consts::{FRAC_PI_2, PI};
use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use swt_core::crf::{
    psi_attention, psi_forward, random_pyramid, sfcrf_block, window_attention, BlockParams,
    DecoderConfig, DecoderParams,
};
use swt_core::geom::{great_circle_distance, isp, rotation_for, sp, wrap_lon};
use swt_core::metrics::{evaluate, silog, DepthPair, SILOG_ALPHA, SILOG_LAMBDA};
use swt_core::swt::{build_index_map_fast, build_index_map_naive, build_template, transform_window};
use swt_core::tensor::AttentionParams;
use swt_core::{AngleCoord, ErpGridSpec, FeatureMap, IndexMap, TemplateConfig};
use swt_tools::bench::{bench_baselines, bench_swt};
use swt_tools::parallel::decoder_par;

struct Outcome {
    pass: bool,
    detail: String,
}

type Check = (&'static str, fn() -> Outcome);

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn random_center(rng: &mut ChaCha8Rng) -> AngleCoord {
    AngleCoord {
        lat: rng.gen_range(-(FRAC_PI_2 - 1e-3)..(FRAC_PI_2 - 1e-3)),
        lon: rng.gen_range(-PI..PI),
    }
}

fn lon_gap(a: f64, b: f64) -> f64 {
    wrap_lon(a - b).abs()
}

fn fast_equals_naive() -> Outcome {
    let t0 = Instant::now();
    let mut failures = Vec::new();
    let mut cases = 0;
    for &(h, w) in &[(64, 128), (128, 256), (512, 1024)] {
        let g = ErpGridSpec::new(h, w).unwrap();
        for m in [4, 8] {
            for d in [1, 2] {
                let cfg = TemplateConfig::square(g, m, d).unwrap();
                cases += 1;
                if build_index_map_fast(&g, &cfg).unwrap() != build_index_map_naive(&g, &cfg).unwrap() {
                    failures.push(format!("{h}x{w} M={m} d={d}"));
                }
            }
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    outcome(
        failures.is_empty() && secs <= 60.0,
        format!("{cases} configurations, {} mismatches {:?}, {secs:.2} s (limit 60 s)", failures.len(), failures),
    )
}

fn speedup() -> Outcome {
    let g = ErpGridSpec::new(512, 1024).unwrap();
    let cfg = TemplateConfig::square(g, 8, 1).unwrap();
    let r = bench_swt(&cfg, 5, 1).unwrap();
    let s = r.speedup(512, 1024, 8).unwrap();
    let fast = r.case("swt_fast").unwrap().median_s;
    let soft = if fast <= 0.1 { "met" } else { "missed" };
    outcome(
        s >= 5.0,
        format!("speedup {s:.2}x (need >= 5x); fast path {fast:.4} s, soft target 0.1 s {soft}"),
    )
}

fn isometry() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let g = ErpGridSpec::new(64, 128).unwrap();
    let t = build_template(&TemplateConfig::square(g, 4, 1).unwrap()).unwrap();
    let base: Vec<_> = t.vectors.clone();
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let r = rotation_for(&random_center(&mut rng));
        let moved: Vec<_> = base.iter().map(|v| r.apply(v)).collect();
        for a in 0..base.len() {
            for b in a + 1..base.len() {
                let d0 = great_circle_distance(&base[a], &base[b]);
                let d1 = great_circle_distance(&moved[a], &moved[b]);
                worst = worst.max((d0 - d1).abs());
            }
        }
    }
    outcome(worst <= 1e-12, format!("max |distance change| {worst:.3e} rad (tol 1e-12)"))
}

fn round_trips() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst_rt = 0.0f64;
    for _ in 0..100_000 {
        let a = AngleCoord {
            lat: rng.gen_range(-(FRAC_PI_2 - 1e-6)..(FRAC_PI_2 - 1e-6)),
            lon: rng.gen_range(-PI..PI),
        };
        let b = isp(&sp(&a)).unwrap();
        worst_rt = worst_rt.max((a.lat - b.lat).abs()).max(lon_gap(a.lon, b.lon));
    }
    let (mut worst_orth, mut worst_det) = (0.0f64, 0.0f64);
    for _ in 0..10_000 {
        let r = rotation_for(&random_center(&mut rng));
        worst_orth = worst_orth.max(r.orthogonality_error());
        worst_det = worst_det.max((r.det() - 1.0).abs());
    }
    outcome(
        worst_rt <= 1e-12 && worst_orth <= 1e-12 && worst_det <= 1e-12,
        format!("isp(sp) {worst_rt:.3e}, |RtR-I| {worst_orth:.3e}, |det-1| {worst_det:.3e} (tol 1e-12)"),
    )
}

fn yaw_roll_and_symmetry() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let g = ErpGridSpec::new(64, 128).unwrap();
    let t = build_template(&TemplateConfig::new(g, 4, 6, 1).unwrap()).unwrap();
    let (mut roll, mut sym) = (0.0f64, 0.0f64);
    for _ in 0..1000 {
        let c = random_center(&mut rng);
        let other = AngleCoord { lat: c.lat, lon: rng.gen_range(-PI..PI) };
        let a = transform_window(&t, &c);
        let b = transform_window(&t, &other);
        let offset = other.lon - c.lon;
        let mirrored = transform_window(&t, &AngleCoord { lat: -c.lat, lon: c.lon });
        for i in 0..t.rows {
            for j in 0..t.cols {
                let (p, q) = (a.get(i, j), b.get(i, j));
                // Longitude is undefined at the exact poles; every node here is
                // at least ~1e-3 rad away from them.
                roll = roll.max((p.lat - q.lat).abs()).max(lon_gap(q.lon, p.lon + offset));
                let s = mirrored.get(t.rows - 1 - i, j);
                sym = sym.max((p.lat + s.lat).abs()).max(lon_gap(p.lon, s.lon));
            }
        }
    }
    outcome(
        roll <= 1e-12 && sym <= 1e-12,
        format!("yaw-roll {roll:.3e}, longitudinal symmetry {sym:.3e} (tol 1e-12)"),
    )
}

fn psi_degeneracy() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let f = FeatureMap::random(16, 32, 8, -1.0, 1.0, &mut rng);
    let p = AttentionParams::random(8, 2, &mut rng);
    let g = ErpGridSpec::new(16, 32).unwrap();
    let id = IndexMap::identity(g, 4, 4).unwrap();
    let diff = psi_forward(&f, &p, &id)
        .unwrap()
        .max_abs_diff(&window_attention(&f, &p, 4, 4).unwrap());
    let mut row_err = 0.0f64;
    let swt = build_index_map_fast(&g, &TemplateConfig::square(g, 4, 1).unwrap()).unwrap();
    for map in [&id, &swt] {
        let w = psi_attention(&f, &p, map).unwrap();
        for row in w.chunks_exact(16) {
            row_err = row_err.max((row.iter().sum::<f64>() - 1.0).abs());
        }
    }
    outcome(
        (diff as f64) <= 1e-6 && row_err <= 1e-6,
        format!("identity gather vs window attention {diff:.3e}, row sums {row_err:.3e} (tol 1e-6)"),
    )
}

fn block_and_decoder() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let f = FeatureMap::random(16, 32, 8, -1.0, 1.0, &mut rng);
    let g = ErpGridSpec::new(16, 32).unwrap();
    let map = build_index_map_fast(&g, &TemplateConfig::square(g, 4, 1).unwrap()).unwrap();
    let id_err = sfcrf_block(&f, &BlockParams::zeros(8, 4, 2), &map).unwrap().max_abs_diff(&f);

    let cfg = DecoderConfig::new(vec![8, 8, 16, 16], 11);
    let params = DecoderParams::init(&cfg).unwrap();
    let finest = ErpGridSpec::new(16, 32).unwrap();
    let run = |threads| {
        let pyramid = random_pyramid(&cfg, finest, cfg.seed);
        decoder_par(cfg.clone(), params.clone(), finest, threads)
            .unwrap()
            .forward(&pyramid)
            .unwrap()
    };
    let a = run(1);
    let shape_ok = (a.height(), a.width(), a.channels()) == (64, 128, 1);
    let positive = a.data().iter().all(|&v| v > 0.0 && v.is_finite());
    let bits = |m: &FeatureMap| m.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    let repeat = bits(&a) == bits(&run(1));
    let threads = [2, 4, 8].iter().all(|&t| bits(&a) == bits(&run(t)));
    outcome(
        (id_err as f64) <= 1e-6 && shape_ok && positive && repeat && threads,
        format!(
            "zero block {id_err:.3e} (tol 1e-6); output {}x{}x{} positive={positive}; repeat identical={repeat}; threads 1/2/4/8 identical={threads}",
            a.height(),
            a.width(),
            a.channels()
        ),
    )
}

fn metric_fixtures() -> Outcome {
    let gt: Vec<f64> = (0..16).map(|i| 1.0 + 0.5 * i as f64).collect();
    let over = DepthPair::new(gt.iter().map(|g| 1.3 * g).collect(), gt.clone()).unwrap();
    let m = evaluate(&over, false).unwrap();
    let over_ok = (m.abs_rel - 0.3).abs() <= 1e-12 && (m.delta1, m.delta2, m.delta3) == (0.0, 1.0, 1.0);
    let perfect = evaluate(&DepthPair::new(gt.clone(), gt.clone()).unwrap(), false).unwrap();
    let perfect_ok = perfect.abs_rel == 0.0 && perfect.rmse == 0.0 && perfect.delta1 == 1.0;
    let doubled = DepthPair::new(gt.iter().map(|g| 2.0 * g).collect(), gt).unwrap();
    let a = evaluate(&doubled, true).unwrap();
    let align_ok = a.abs_rel.abs() <= 1e-12 && a.rmse.abs() <= 1e-12 && a.delta1 == 1.0;
    outcome(
        over_ok && perfect_ok && align_ok,
        format!(
            "1.3x: abs_rel {:.15} delta ({}, {}, {}); perfect ok={perfect_ok}; 2x aligned abs_rel {:.3e}",
            m.abs_rel, m.delta1, m.delta2, m.delta3, a.abs_rel
        ),
    )
}

fn silog_cases() -> Outcome {
    let gt: Vec<f64> = (0..16).map(|i| 0.5 + 0.25 * i as f64).collect();
    let zero = silog(&DepthPair::new(gt.clone(), gt.clone()).unwrap(), SILOG_ALPHA, SILOG_LAMBDA).unwrap();
    let e = std::f64::consts::E;
    let one = silog(&DepthPair::new(vec![3.0 * e], vec![3.0]).unwrap(), SILOG_ALPHA, SILOG_LAMBDA).unwrap();
    let single_err = (one - 10.0 * 0.15f64.sqrt()).abs();
    let pred: Vec<f64> = gt.iter().enumerate().map(|(i, g)| g * (1.0 + 0.1 * (i as f64).sin())).collect();
    let mut worst_rel = 0.0f64;
    for s in [0.01, 0.5, 3.0, 250.0] {
        let a = silog(&DepthPair::new(pred.clone(), gt.clone()).unwrap(), 10.0, 1.0).unwrap();
        let b = silog(&DepthPair::new(pred.iter().map(|p| p * s).collect(), gt.clone()).unwrap(), 10.0, 1.0).unwrap();
        worst_rel = worst_rel.max((a - b).abs() / a.abs());
    }
    outcome(
        zero == 0.0 && single_err <= 1e-9 && worst_rel <= 1e-9,
        format!("perfect {zero}, e-ratio error {single_err:.3e}, lambda=1 scale change {worst_rel:.3e} relative (tol 1e-9)"),
    )
}

fn benchmark_orderings() -> Outcome {
    let g = ErpGridSpec::new(512, 1024).unwrap();
    let swt = bench_swt(&TemplateConfig::square(g, 8, 1).unwrap(), 3, 1).unwrap();
    let fast = swt.case("swt_fast").unwrap().median_s;
    let base = bench_baselines(&g, &[3, 5, 7, 9], 2).unwrap();
    let times: Vec<f64> = [3, 5, 7, 9]
        .iter()
        .map(|k| base.case(&format!("tangent_k{k}")).unwrap().median_s)
        .collect();
    let increasing = times.windows(2).all(|w| w[0] < w[1]);
    let faster = fast < times[0];
    let cube = base.case("cubemap").unwrap().median_s;
    outcome(
        increasing && faster,
        format!(
            "swt fast {fast:.4} s; tangent k3/5/7/9 {:.3}/{:.3}/{:.3}/{:.3} s; cube map {cube:.3} s",
            times[0], times[1], times[2], times[3]
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [Check; 10] = [
        ("fast path equals naive path", fast_equals_naive),
        ("fast path speedup at 512x1024, M=8", speedup),
        ("rotations preserve node distances", isometry),
        ("geometry round trips", round_trips),
        ("yaw-roll and longitudinal symmetry", yaw_roll_and_symmetry),
        ("PSI degenerates to window attention", psi_degeneracy),
        ("zero block identity and decoder determinism", block_and_decoder),
        ("metric fixtures", metric_fixtures),
        ("SILog cases", silog_cases),
        ("benchmark orderings", benchmark_orderings),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let o = check();
        if !o.pass {
            failed += 1;
        }
        println!("{} criterion {}: {name}: {}", if o.pass { "PASS" } else { "FAIL" }, i + 1, o.detail);
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
