//! Contrast invariance, homogeneity and the reductions of the multi-view
//! descriptors to the single-view one.

use mvdesc::hog::{normalize_dog, patch_density, sv_dog, DescriptorParams, DescriptorVector};
use mvdesc::imgproc::{apply_contrast, Contrast, GrayImage};
use mvdesc::mvhog::MvAccumulator;
use mvdesc::rhog::{compute_rhog, compute_rhog_from_views, synthesize_patch, LocalSurface, DEFAULT_VISIBILITY};
use mvdesc::synth::PinholeCamera;
use nalgebra::Matrix3;
use proptest::prelude::*;

const SIZES: [usize; 3] = [7, 11, 21];

fn patch_strategy(lo: f64, hi: f64) -> impl Strategy<Value = GrayImage> {
    prop::sample::select(SIZES.to_vec()).prop_flat_map(move |n| {
        prop::collection::vec(lo..=hi, n * n).prop_map(move |d| GrayImage::new(n, n, d).unwrap())
    })
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn assert_cells_sum_to_one(v: &DescriptorVector) {
    for c in v.cells() {
        let s: f64 = c.iter().sum();
        assert!((s - 1.0).abs() <= 1e-6, "cell sums to {s}");
        assert!(c.iter().all(|&x| x >= 0.0));
    }
}

fn fronto_surface(size: usize, depth: f64, cam: PinholeCamera, center: (f64, f64)) -> LocalSurface {
    let r = (size as f64 - 1.0) / 2.0;
    let mut points = Vec::new();
    for i in 0..size {
        for j in 0..size {
            points.push(cam.back_project(center.0 + j as f64 - r, center.1 + i as f64 - r, depth));
        }
    }
    let anchor = cam.back_project(center.0, center.1, depth);
    LocalSurface::from_points(size, center, vec![depth; size * size], points, anchor, cam).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dog_is_invariant_to_affine_contrast(
        img in patch_strategy(0.2, 0.8),
        a in 0.05f64..1.2,
        t in 0.0f64..1.0,
    ) {
        // b keeps a * [0.2, 0.8] + b inside [0, 1]
        let (lo, hi) = (-0.2 * a, 1.0 - 0.8 * a);
        prop_assume!(hi >= lo);
        let b = lo + t * (hi - lo);
        let p = DescriptorParams::for_patch(img.width());
        let base = sv_dog(&img, &p).unwrap();
        let mapped = sv_dog(&apply_contrast(&img, &Contrast::Affine { a, b }).unwrap(), &p).unwrap();
        prop_assert!(max_abs_diff(&base.values, &mapped.values) <= 1e-9);
    }

    #[test]
    fn unnormalized_density_is_homogeneous_of_degree_one(
        img in patch_strategy(0.0, 0.5),
        a in 0.01f64..2.0,
    ) {
        let p = DescriptorParams::for_patch(img.width());
        let scaled = GrayImage::from_fn(img.width(), img.height(), |x, y| a * img.get(x, y)).unwrap();
        let h = patch_density(&img, &p).unwrap();
        let ha = patch_density(&scaled, &p).unwrap();
        let scale = h.values().iter().cloned().fold(1e-300, f64::max);
        for (x, y) in h.values().iter().zip(ha.values()) {
            prop_assert!((a * x - y).abs() <= 1e-12 * a * scale);
        }
    }

    #[test]
    fn single_frame_mv_equals_single_view(img in patch_strategy(0.0, 1.0)) {
        let p = DescriptorParams::for_patch(img.width());
        let mut acc = MvAccumulator::new(p).unwrap();
        acc.update(&img).unwrap();
        prop_assert_eq!(acc.finalize().unwrap().values, sv_dog(&img, &p).unwrap().values);
    }

    #[test]
    fn identity_rhog_equals_single_view(img in patch_strategy(0.0, 1.0)) {
        let p = DescriptorParams::for_patch(img.width());
        prop_assert_eq!(compute_rhog(std::slice::from_ref(&img), &p).unwrap().values, sv_dog(&img, &p).unwrap().values);
    }

    #[test]
    fn every_descriptor_is_normalized_per_cell(
        imgs in prop::collection::vec(patch_strategy(0.0, 1.0), 1..4),
        flat in 0usize..3,
    ) {
        let n = imgs[0].width();
        let mut imgs: Vec<GrayImage> = imgs.into_iter().filter(|i| i.width() == n).collect();
        // constant patches exercise the empty-cell path
        for _ in 0..flat {
            imgs.push(GrayImage::filled(n, n, 0.3).unwrap());
        }
        let p = DescriptorParams::for_patch(n);
        let mut acc = MvAccumulator::new(p).unwrap();
        for i in &imgs {
            assert_cells_sum_to_one(&sv_dog(i, &p).unwrap());
            acc.update(i).unwrap();
        }
        assert_cells_sum_to_one(&acc.finalize().unwrap());
        assert_cells_sum_to_one(&compute_rhog(&imgs, &p).unwrap());
    }
}

#[test]
fn identity_view_synthesis_gives_the_single_view_descriptor() {
    let cam = PinholeCamera::new(120.0, 20.0, 20.0, 41, 41).unwrap();
    let img = GrayImage::from_fn(41, 41, |x, y| 0.5 + 0.4 * ((x as f64 * 0.7).sin() * (y as f64 * 0.45).cos())).unwrap();
    let p = DescriptorParams::for_patch(11);
    let surface = fronto_surface(11, 3.0, cam, (20.0, 20.0));
    let view = synthesize_patch(&img, &surface, &Matrix3::identity(), DEFAULT_VISIBILITY).unwrap();
    let direct = img.crop(15, 15, 11).unwrap();
    assert!(max_abs_diff(view.image.data(), direct.data()) <= 1e-9);
    let r = compute_rhog_from_views(&[view], &p).unwrap();
    let sv = sv_dog(&direct, &p).unwrap();
    assert!(max_abs_diff(&r.values, &sv.values) <= 1e-9);
}

#[test]
fn zero_patch_is_uniform_and_flagged() {
    let p = DescriptorParams::for_patch(11);
    let img = GrayImage::filled(11, 11, 0.0).unwrap();
    let h = normalize_dog(&patch_density(&img, &p).unwrap());
    assert!(h.zero_mass().iter().all(|&f| f));
    assert!(h.values().iter().all(|&v| (v - 1.0 / 16.0).abs() < 1e-15));
}

#[test]
fn quarter_turn_of_the_patch_shifts_bins_by_a_quarter() {
    // rotate90 maps direction a to a + pi/2 and input cell (row, col) to
    // (col, cells - 1 - row); with B a multiple of 4 bins shift by B/4
    let n = 11;
    let img = GrayImage::from_fn(n, n, |x, y| ((x * 7 + y * 13) % 17) as f64 / 16.0).unwrap();
    let p = DescriptorParams::for_patch(n);
    let a = normalize_dog(&patch_density(&img, &p).unwrap());
    let b = normalize_dog(&patch_density(&img.rotate90(), &p).unwrap());
    let (c, q) = (p.cells, p.bins / 4);
    for row in 0..c {
        for col in 0..c {
            for bin in 0..p.bins {
                let moved = b.get(col, c - 1 - row, (bin + q) % p.bins);
                assert!((a.get(row, col, bin) - moved).abs() <= 1e-9);
            }
        }
    }
}
