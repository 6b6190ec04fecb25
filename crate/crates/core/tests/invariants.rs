use std::f64::consts::{FRAC_PI_2, PI};

use proptest::prelude::*;
use swt_core::crf::{psi_forward, window_attention};
use swt_core::geom::{great_circle_distance, isp, rotation_for, sp, wrap_lon};
use swt_core::metrics::{evaluate, silog, DepthPair};
use swt_core::swt::{build_index_map_fast, build_index_map_naive, build_template, transform_window};
use swt_core::tensor::{merge_windows, mhsa, partition_windows, AttentionParams, WindowSet};
use swt_core::{AngleCoord, ErpGridSpec, FeatureMap, IndexMap, TemplateConfig};

fn lat() -> impl Strategy<Value = f64> {
    -(FRAC_PI_2 - 1e-6)..(FRAC_PI_2 - 1e-6)
}

fn lon() -> impl Strategy<Value = f64> {
    (-PI + 1e-9)..PI
}

fn angle() -> impl Strategy<Value = AngleCoord> {
    (lat(), lon()).prop_map(|(lat, lon)| AngleCoord { lat, lon })
}

fn lon_diff(a: f64, b: f64) -> f64 {
    wrap_lon(a - b).abs().min((2.0 * PI - wrap_lon(a - b).abs()).abs())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn sp_isp_round_trip(a in angle()) {
        let b = isp(&sp(&a)).unwrap();
        prop_assert!((a.lat - b.lat).abs() <= 1e-12);
        prop_assert!(lon_diff(a.lon, b.lon) <= 1e-12);
    }

    #[test]
    fn rotations_are_proper(t in angle()) {
        let r = rotation_for(&t);
        prop_assert!(r.orthogonality_error() <= 1e-12);
        prop_assert!((r.det() - 1.0).abs() <= 1e-12);
        let c = r.apply(&sp(&AngleCoord::equator()));
        let want = sp(&t);
        prop_assert!((c.x - want.x).abs() <= 1e-12);
        prop_assert!((c.y - want.y).abs() <= 1e-12);
        prop_assert!((c.z - want.z).abs() <= 1e-12);
    }

    #[test]
    fn rotations_preserve_distance(t in angle(), p in angle(), q in angle()) {
        let r = rotation_for(&t);
        let (p, q) = (sp(&p), sp(&q));
        let before = great_circle_distance(&p, &q);
        let after = great_circle_distance(&r.apply(&p), &r.apply(&q));
        prop_assert!((before - after).abs() <= 1e-12);
    }

    #[test]
    fn yaw_is_a_longitude_shift(t in angle(), p in angle()) {
        let v = sp(&p);
        let full = isp(&rotation_for(&t).apply(&v)).unwrap();
        let pitched = isp(&rotation_for(&AngleCoord { lat: t.lat, lon: 0.0 }).apply(&v)).unwrap();
        // Near the poles longitude is ill-conditioned.
        prop_assume!(full.lat.abs() < FRAC_PI_2 - 1e-4);
        prop_assert!(lon_diff(full.lon, pitched.lon + t.lon) <= 1e-12);
    }

    #[test]
    fn partition_merge_round_trip(
        seed in any::<u64>(),
        (nh, nw, m, c) in (1usize..4, 1usize..4, 1usize..5, 1usize..4),
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let f = FeatureMap::from_fn(nh * m, nw * m, c, |_, _, _| rng.gen_range(-5.0..5.0));
        let w = partition_windows(&f, m, m).unwrap();
        prop_assert_eq!(merge_windows(&w).unwrap(), f);
    }

    #[test]
    fn softmax_ignores_row_constant(seed in any::<u64>(), shift in prop::array::uniform4(-3.0f32..3.0)) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut data = || (0..16 * 4).map(|_| rng.gen_range(-1.0f32..1.0)).collect::<Vec<_>>();
        let q = WindowSet::new(1, 1, 4, 4, 4, data()).unwrap();
        let k = WindowSet::new(1, 1, 4, 4, 4, data()).unwrap();
        let v = WindowSet::new(1, 1, 4, 4, 4, data()).unwrap();
        // Adding the same vector to every key adds q_i·s to row i of the logits.
        let shifted: Vec<f32> = k.data().chunks_exact(4)
            .flat_map(|node| node.iter().zip(&shift).map(|(a, b)| a + b).collect::<Vec<_>>())
            .collect();
        let k2 = WindowSet::new(1, 1, 4, 4, 4, shifted).unwrap();
        let p = AttentionParams::identity(4, 1);
        let a = mhsa(&q, &k, &v, &p).unwrap();
        let b = mhsa(&q, &k2, &v, &p).unwrap();
        for (x, y) in a.data().iter().zip(b.data()) {
            prop_assert!((x - y).abs() <= 1e-6);
        }
    }

    #[test]
    fn delta_accuracies_are_monotone(pred in prop::collection::vec(0.01f64..20.0, 1..64), seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let gt: Vec<f64> = pred.iter().map(|_| if rng.gen_bool(0.2) { 0.0 } else { rng.gen_range(0.1..10.0) }).collect();
        let pair = DepthPair::new(pred, gt).unwrap();
        prop_assume!(pair.observed() > 0);
        for align in [false, true] {
            let m = evaluate(&pair, align).unwrap();
            prop_assert!(m.delta1 <= m.delta2 && m.delta2 <= m.delta3);
            prop_assert!((0.0..=1.0).contains(&m.delta1) && m.delta3 <= 1.0);
        }
    }

    #[test]
    fn metrics_are_permutation_invariant(pairs in prop::collection::vec((0.1f64..20.0, 0.1f64..20.0), 2..128), rot in 0usize..128) {
        let (pred, gt): (Vec<f64>, Vec<f64>) = pairs.iter().cloned().unzip();
        let a = evaluate(&DepthPair::new(pred.clone(), gt.clone()).unwrap(), true).unwrap();
        let mut perm: Vec<(f64, f64)> = pairs.clone();
        perm.reverse();
        let k = rot % perm.len();
        perm.rotate_left(k);
        let (pp, pg): (Vec<f64>, Vec<f64>) = perm.into_iter().unzip();
        let b = evaluate(&DepthPair::new(pp, pg).unwrap(), true).unwrap();
        for ((_, x), (_, y)) in a.entries().iter().zip(b.entries().iter()) {
            prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
        }
    }

    #[test]
    fn silog_full_lambda_is_scale_invariant(pairs in prop::collection::vec((0.1f64..20.0, 0.1f64..20.0), 1..64), scale in 0.01f64..100.0) {
        let (pred, gt): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let scaled: Vec<f64> = pred.iter().map(|p| p * scale).collect();
        let a = silog(&DepthPair::new(pred, gt.clone()).unwrap(), 10.0, 1.0).unwrap();
        let b = silog(&DepthPair::new(scaled, gt).unwrap(), 10.0, 1.0).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1e-3));
    }
}

#[test]
fn median_alignment_matches_medians() {
    let pred: Vec<f64> = (0..25).map(|i| 0.3 + (i as f64 * 0.37).sin().abs() * 4.0).collect();
    let gt: Vec<f64> = (0..25).map(|i| 1.0 + (i as f64 * 0.11).cos().abs() * 7.0).collect();
    let pair = DepthPair::new(pred.clone(), gt.clone()).unwrap();
    let s = swt_core::metrics::median_scale(&pair).unwrap();
    let aligned: Vec<f64> = pred.iter().map(|p| p * s).collect();
    let pm = swt_core::metrics::median(&aligned).unwrap();
    let gm = swt_core::metrics::median(&gt).unwrap();
    assert!((pm - gm).abs() <= 2.0 * f64::EPSILON * gm);
}

#[test]
fn longitudinal_symmetry_of_windows() {
    let g = ErpGridSpec::new(64, 128).unwrap();
    let t = build_template(&TemplateConfig::square(g, 4, 1).unwrap()).unwrap();
    for &(la, lo) in &[(0.3, 0.0), (1.2, -2.0), (0.77, 3.0)] {
        let north = transform_window(&t, &AngleCoord { lat: la, lon: lo });
        let south = transform_window(&t, &AngleCoord { lat: -la, lon: lo });
        for i in 0..4 {
            for j in 0..4 {
                let a = north.get(i, j);
                let b = south.get(3 - i, j);
                assert!((a.lat + b.lat).abs() <= 1e-12);
                assert!(lon_diff(a.lon, b.lon) <= 1e-12);
            }
        }
    }
}

#[test]
fn fast_equals_naive_on_rectangular_and_odd_layouts() {
    for &(h, w, mr, mc, d) in &[(12, 24, 4, 4, 1), (30, 60, 3, 5, 2), (16, 48, 2, 8, 1), (9, 18, 3, 3, 3)] {
        let g = ErpGridSpec::new(h, w).unwrap();
        let cfg = TemplateConfig::new(g, mr, mc, d).unwrap();
        assert_eq!(
            build_index_map_fast(&g, &cfg).unwrap(),
            build_index_map_naive(&g, &cfg).unwrap(),
            "{}x{} window {}x{} d={}",
            h,
            w,
            mr,
            mc,
            d
        );
    }
}

#[test]
fn psi_with_identity_gather_is_window_attention() {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
    let f = FeatureMap::random(16, 32, 8, -1.0, 1.0, &mut rng);
    let p = AttentionParams::random(8, 2, &mut rng);
    let g = ErpGridSpec::new(16, 32).unwrap();
    let id = IndexMap::identity(g, 4, 4).unwrap();
    let a = psi_forward(&f, &p, &id).unwrap();
    let b = window_attention(&f, &p, 4, 4).unwrap();
    assert!(a.max_abs_diff(&b) <= 1e-6);
}
