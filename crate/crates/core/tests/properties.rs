//! Randomized properties of tracking and descriptor matching.

use mvdesc::hog::{DescriptorTag, DescriptorVector};
use mvdesc::imgproc::{build_pyramid, GrayImage};
use mvdesc::matchdb::{distance, DescriptorDatabase, Method, Metric};
use mvdesc::synth::{generate_texture, TextureParams};
use mvdesc::tracker::{
    detect_corners, klt_step, normalize_patch, run_tracker, suppress, DetectorParams, KltOutcome, KltParams, TrackerParams,
};
use proptest::prelude::*;

/// Smooth periodic texture, continuous in `(x, y)`.
fn texture(x: f64, y: f64, phase: f64) -> f64 {
    0.5 + 0.2 * (0.31 * x + phase).sin() * (0.23 * y).cos() + 0.15 * (0.17 * x - 0.29 * y + 2.0 * phase).sin()
}

fn shifted(w: usize, h: usize, dx: f64, dy: f64, phase: f64) -> GrayImage {
    GrayImage::from_fn(w, h, |x, y| texture(x as f64 - dx, y as f64 - dy, phase)).unwrap()
}

fn normalized_vector(raw: &[f64], bins: usize) -> DescriptorVector {
    let mut values = Vec::with_capacity(raw.len());
    for c in raw.chunks(bins) {
        let t: f64 = c.iter().sum();
        values.extend(c.iter().map(|v| v / t));
    }
    DescriptorVector {
        values,
        tag: DescriptorTag::Mv,
        bins,
    }
}

fn vector_pair(bins: usize, cells: usize) -> impl Strategy<Value = (DescriptorVector, DescriptorVector)> {
    let n = bins * cells;
    (
        prop::collection::vec(0.01f64..1.0, n),
        prop::collection::vec(0.01f64..1.0, n),
    )
        .prop_map(move |(a, b)| (normalized_vector(&a, bins), normalized_vector(&b, bins)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn klt_recovers_subpixel_translations(dx in -2.0f64..2.0, dy in -2.0f64..2.0, phase in 0.0f64..6.0) {
        let prev = shifted(64, 64, 0.0, 0.0, phase);
        let next = shifted(64, 64, dx, dy, phase);
        match klt_step(&prev, &next, (32.0, 32.0), 11, &KltParams::default()) {
            KltOutcome::Tracked { x, y, .. } => {
                prop_assert!((x - 32.0 - dx).abs() < 0.1 && (y - 32.0 - dy).abs() < 0.1, "({x}, {y}) for ({dx}, {dy})");
            }
            KltOutcome::Rejected(r) => prop_assert!(false, "rejected: {r:?}"),
        }
    }

    #[test]
    fn patch_normalization_is_bounded_and_contrast_free(
        values in prop::collection::vec(0.0f64..1.0, 25),
        a in 0.1f64..3.0,
        b in -1.0f64..1.0,
    ) {
        let mut p = values.clone();
        normalize_patch(&mut p);
        prop_assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));
        let mut q: Vec<f64> = values.iter().map(|v| a * v + b).collect();
        normalize_patch(&mut q);
        for (x, y) in p.iter().zip(&q) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn suppression_keeps_the_strongest_and_spaces_the_rest(
        cands in prop::collection::vec((0usize..60, 0usize..60, 0.0f64..1.0), 0..80),
        min_dist in 1.0f64..8.0,
    ) {
        let kept = suppress(cands.clone(), min_dist);
        for (i, a) in kept.iter().enumerate() {
            for b in &kept[i + 1..] {
                let d = ((a.0 as f64 - b.0 as f64).powi(2) + (a.1 as f64 - b.1 as f64).powi(2)).sqrt();
                prop_assert!(d >= min_dist);
            }
        }
        if let Some(best) = cands.iter().map(|c| c.2).reduce(f64::max) {
            prop_assert!(kept.iter().any(|k| k.2 == best));
        }
    }

    #[test]
    fn metric_axioms((a, b) in vector_pair(8, 4)) {
        for m in Metric::ALL {
            let dab = distance(&a, &b, m).unwrap();
            prop_assert!(dab.is_finite());
            if m != Metric::Likelihood {
                prop_assert!(dab >= 0.0, "{} negative", m.name());
            }
            if !matches!(m, Metric::Kl | Metric::Likelihood) {
                let dba = distance(&b, &a, m).unwrap();
                prop_assert!((dab - dba).abs() <= 1e-12 * dab.max(1.0), "{} asymmetric", m.name());
            }
            if matches!(m, Metric::L1 | Metric::L2 | Metric::Chi2 | Metric::Bhattacharyya | Metric::Kl) {
                prop_assert!(distance(&a, &a, m).unwrap().abs() <= 1e-12);
                if a.values != b.values && m != Metric::Kl {
                    prop_assert!(dab > 0.0);
                }
            }
        }
    }

    #[test]
    fn database_file_round_trip_quantizes_to_f32(
        rows in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 16), 1..20),
        grouped in any::<bool>(),
    ) {
        let method = if grouped { Method::KeepAll } else { Method::MvHog };
        let mut db = DescriptorDatabase::new(method, Metric::L1, 4, 16).unwrap();
        for (i, r) in rows.iter().enumerate() {
            let track = if grouped { (i / 3) as u64 } else { i as u64 };
            let v = DescriptorVector { values: r.clone(), tag: method.tag(), bins: 4 };
            db.insert(track, i as u32, &v).unwrap();
        }
        let back = DescriptorDatabase::decode(&db.encode()).unwrap();
        prop_assert_eq!(back.len(), db.len());
        prop_assert_eq!(back.method(), method);
        for i in 0..db.len() {
            let (t, k, v) = db.entry(i);
            let (t2, k2, v2) = back.entry(i);
            prop_assert_eq!((t, k), (t2, k2));
            for (x, y) in v.iter().zip(v2) {
                prop_assert_eq!(*y, f64::from(*x as f32));
            }
        }
        prop_assert_eq!(back.encode(), db.encode());
    }

    #[test]
    fn stored_vectors_find_themselves(rows in prop::collection::vec(prop::collection::vec(0.01f64..1.0, 16), 2..15)) {
        let mut db = DescriptorDatabase::new(Method::MvHog, Metric::L1, 4, 16).unwrap();
        let vs: Vec<DescriptorVector> = rows.iter().map(|r| normalized_vector(r, 4)).collect();
        for (i, v) in vs.iter().enumerate() {
            db.insert(i as u64, 0, v).unwrap();
        }
        for (i, v) in vs.iter().enumerate() {
            let r = db.nn_query(v, Metric::L1).unwrap();
            prop_assert_eq!(r.distance, 0.0);
            // an earlier identical vector wins the tie
            let first = vs.iter().position(|u| u.values == v.values).unwrap();
            prop_assert_eq!(r.track, first as u64);
            prop_assert!(r.track <= i as u64);
        }
    }
}

#[test]
fn tracks_follow_a_translating_texture() {
    let (dx, dy) = (0.6, -0.35);
    let frames: Vec<GrayImage> = (0..8).map(|k| shifted(96, 80, dx * k as f64, dy * k as f64, 0.7)).collect();
    let params = TrackerParams {
        target_count: 40,
        ..TrackerParams::for_patch(11)
    };
    let tracks = run_tracker(&frames, &params).unwrap();
    let long: Vec<_> = tracks.iter().filter(|t| t.len() == frames.len()).collect();
    assert!(long.len() >= 5, "{} full-length tracks", long.len());
    for t in long {
        let (x0, y0) = t.positions[0];
        for (k, &(x, y)) in t.positions.iter().enumerate() {
            assert!((x - x0 - dx * k as f64).abs() < 0.25 && (y - y0 - dy * k as f64).abs() < 0.25);
        }
        assert!(t.patches.iter().all(|p| p.width() == 11 && p.height() == 11));
    }
    // ids are unique and increasing in creation order
    let ids: Vec<u64> = tracks.iter().map(|t| t.id).collect();
    assert!(ids.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn detector_lands_near_the_requested_count() {
    let tex = generate_texture(&TextureParams::default(), 5).unwrap();
    let img = tex.crop(0, 0, 120).unwrap();
    let pyr = build_pyramid(&img, 3).unwrap();
    let params = DetectorParams::default();
    let kps = detect_corners(&pyr, 100, 4.0, &params);
    let n = kps.len() as f64;
    assert!((n - 100.0).abs() <= 0.2 * 100.0, "{n} corners");
    for k in &kps {
        assert!(k.level < 3 && k.score > 0.0);
    }
}
