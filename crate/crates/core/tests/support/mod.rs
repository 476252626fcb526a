//! Independent oracles and measurements shared by the test suites.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI, TAU};

use mvdesc::hog::{compute_hog_density, patch_density, sv_dog, DescriptorParams, DescriptorTag, DescriptorVector};
use mvdesc::imgproc::{apply_contrast, compute_gradient, AngularKernel, Contrast, GrayImage};
use mvdesc::matchdb::{distance, DescriptorDatabase, Method, Metric};
use mvdesc::mvhog::MvAccumulator;
use mvdesc::rhog::{compute_rhog, synthesize_patch, LocalSurface, DEFAULT_VISIBILITY};
use mvdesc::synth::{
    axis_angle, build_scene, ground_truth_correspondence, render_view, Correspondence, PinholeCamera, Pose,
    RenderSettings, RenderedFrame, SceneModel, SceneParams, SurfaceKind,
};
use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_patch(rng: &mut ChaCha8Rng, n: usize) -> GrayImage {
    GrayImage::from_fn(n, n, |_, _| rng.random::<f64>()).unwrap()
}

/// Finite differences, central inside and one-sided at the border.
pub fn gradient(img: &GrayImage, x: usize, y: usize) -> (f64, f64) {
    let (w, h) = (img.width(), img.height());
    let (xl, xr) = (x.saturating_sub(1), (x + 1).min(w - 1));
    let (yu, yd) = (y.saturating_sub(1), (y + 1).min(h - 1));
    let gx = (img.get(xr, y) - img.get(xl, y)) / (xr - xl) as f64;
    let gy = (img.get(x, yd) - img.get(x, yu)) / (yd - yu) as f64;
    (gx, gy)
}

pub fn angular(theta: f64, mu: f64, eps: f64, kind: AngularKernel) -> f64 {
    let mut d = (theta - mu).abs() % TAU;
    if d > PI {
        d = TAU - d;
    }
    match kind {
        AngularKernel::Triangular => (1.0 - d / eps).max(0.0),
        AngularKernel::WrappedGaussian => {
            let g = |d: f64| -> f64 {
                (-4i32..=4)
                    .map(|k| {
                        let t = d + TAU * k as f64;
                        (-t * t / (2.0 * eps * eps)).exp()
                    })
                    .sum()
            };
            g(d) / g(0.0)
        }
    }
}

pub fn spatial(dx: f64, dy: f64, sigma: f64) -> f64 {
    let r2 = dx * dx + dy * dy;
    if r2.sqrt() > 3.0 * sigma {
        return 0.0;
    }
    (-r2 / (2.0 * sigma * sigma)).exp() / (2.0 * PI * sigma * sigma)
}

/// h(x, b) = sum_y K(mu_b - angle G(y)) N(x - y) |G(y)| over the patch.
pub fn brute_force_density(img: &GrayImage, p: &DescriptorParams) -> Vec<f64> {
    let n = p.patch_size;
    let step = n as f64 / p.cells as f64;
    let mut out = vec![0.0; p.descriptor_len()];
    for row in 0..p.cells {
        for col in 0..p.cells {
            let cx = (col as f64 + 0.5) * step - 0.5;
            let cy = (row as f64 + 0.5) * step - 0.5;
            for b in 0..p.bins {
                let mu = (b as f64 + 0.5) * TAU / p.bins as f64;
                let mut acc = 0.0;
                for y in 0..n {
                    for x in 0..n {
                        let (gx, gy) = gradient(img, x, y);
                        let m = (gx * gx + gy * gy).sqrt();
                        if m == 0.0 {
                            continue;
                        }
                        let theta = gy.atan2(gx).rem_euclid(TAU);
                        acc += angular(theta, mu, p.eps, p.kernel) * spatial(cx - x as f64, cy - y as f64, p.sigma) * m;
                    }
                }
                out[(row * p.cells + col) * p.bins + b] = acc;
            }
        }
    }
    out
}

/// Largest deviation of the library density from the brute-force sum over
/// `count` random patches of mixed sizes and kernels.
pub fn density_oracle_max_error(count: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    let mut worst: f64 = 0.0;
    for i in 0..count {
        let n = [7, 11, 15, 21][i % 4];
        let mut p = DescriptorParams::for_patch(n);
        if i % 5 == 4 {
            p.kernel = AngularKernel::WrappedGaussian;
            p.eps = 0.3;
        }
        if i % 7 == 3 {
            p.bins = 8;
            p.eps = TAU / 8.0;
            p.cells = 3;
        }
        let img = random_patch(&mut rng, n);
        let got = compute_hog_density(&compute_gradient(&img), &p, 0, 0).unwrap();
        for (a, b) in got.values().iter().zip(&brute_force_density(&img, &p)) {
            worst = worst.max((a - b).abs());
        }
    }
    worst
}

pub fn random_descriptor(rng: &mut ChaCha8Rng, cells: usize, bins: usize, quantized: bool) -> DescriptorVector {
    let mut values = Vec::with_capacity(cells * bins);
    for _ in 0..cells {
        let raw: Vec<f64> = (0..bins)
            .map(|_| {
                let v: f64 = rng.random::<f64>();
                if quantized {
                    // coarse values force exact distance ties
                    (v * 3.0).floor()
                } else {
                    v
                }
            })
            .collect();
        let total: f64 = raw.iter().sum();
        if total == 0.0 {
            values.extend(std::iter::repeat_n(1.0 / bins as f64, bins));
        } else {
            values.extend(raw.iter().map(|v| v / total));
        }
    }
    DescriptorVector {
        values,
        tag: DescriptorTag::Sv,
        bins,
    }
}

/// Best (track, distance): group minimum per track, lowest track id on ties.
pub fn scan(entries: &[(u64, DescriptorVector)], q: &DescriptorVector, metric: Metric) -> (u64, f64) {
    let mut per_track: BTreeMap<u64, f64> = BTreeMap::new();
    for (t, v) in entries {
        let d = distance(q, v, metric).unwrap();
        let e = per_track.entry(*t).or_insert(f64::INFINITY);
        if d < *e {
            *e = d;
        }
    }
    let mut best: Option<(u64, f64)> = None;
    for (&t, &d) in &per_track {
        if best.is_none_or(|b| d < b.1) {
            best = Some((t, d));
        }
    }
    best.unwrap()
}

/// Queries on `count` random databases whose answer differs from [`scan`].
pub fn nn_oracle_mismatches(count: usize) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let methods = [Method::SvHog, Method::MvHog, Method::KeepAll, Method::RHog, Method::RHogMaxOut];
    let (cells, bins) = (4, 4);
    let mut bad = 0;
    for k in 0..count {
        let method = methods[k % methods.len()];
        let metric = Metric::ALL[k % Metric::ALL.len()];
        let quantized = k % 3 == 0;
        let tracks = rng.random_range(1..12u64);
        let mut db = DescriptorDatabase::new(method, metric, bins, cells * bins).unwrap();
        let mut entries = Vec::new();
        let mut ids: Vec<u64> = (0..tracks).map(|t| t * 7 % 23).collect();
        ids.sort_unstable();
        ids.dedup();
        // insertion order reversed so ties are not resolved by position
        ids.reverse();
        for &t in &ids {
            let group = if method.grouped() { rng.random_range(1..5) } else { 1 };
            for i in 0..group {
                let v = random_descriptor(&mut rng, cells, bins, quantized);
                db.insert(t, i, &v).unwrap();
                entries.push((t, v));
            }
        }
        for _ in 0..5 {
            let q = random_descriptor(&mut rng, cells, bins, quantized);
            let got = db.nn_query(&q, metric).unwrap();
            let (track, d) = scan(&entries, &q, metric);
            let same_distance = got.distance == d || (got.distance - d).abs() <= 1e-12 * d.abs().max(1.0);
            if got.track != track || !same_distance {
                bad += 1;
            }
        }
    }
    bad
}

/// Largest errors of the invariance properties over random patches.
#[derive(Debug, Default)]
pub struct InvarianceErrors {
    pub affine_contrast: f64,
    pub homogeneity: f64,
    pub mv_single_frame: f64,
    pub rhog_identity: f64,
    pub normalization: f64,
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn cell_sum_error(v: &DescriptorVector) -> f64 {
    v.cells().map(|c| (c.iter().sum::<f64>() - 1.0).abs()).fold(0.0, f64::max)
}

pub fn invariance_errors(count: usize) -> InvarianceErrors {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut e = InvarianceErrors::default();
    for i in 0..count {
        let n = [7, 11, 21][i % 3];
        let p = DescriptorParams::for_patch(n);
        let img = GrayImage::from_fn(n, n, |_, _| 0.2 + 0.6 * rng.random::<f64>()).unwrap();

        let a = 0.05 + 1.1 * rng.random::<f64>();
        let (lo, hi) = (-0.2 * a, 1.0 - 0.8 * a);
        let b = lo + rng.random::<f64>() * (hi - lo);
        let base = sv_dog(&img, &p).unwrap();
        let mapped = sv_dog(&apply_contrast(&img, &Contrast::Affine { a, b }).unwrap(), &p).unwrap();
        e.affine_contrast = e.affine_contrast.max(max_abs_diff(&base.values, &mapped.values));

        let s = 0.01 + 1.2 * rng.random::<f64>();
        let scaled = GrayImage::from_fn(n, n, |x, y| s * img.get(x, y)).unwrap();
        let h = patch_density(&img, &p).unwrap();
        let hs = patch_density(&scaled, &p).unwrap();
        let scale = h.values().iter().cloned().fold(1e-300, f64::max);
        let rel = h
            .values()
            .iter()
            .zip(hs.values())
            .map(|(x, y)| (s * x - y).abs() / (s * scale))
            .fold(0.0, f64::max);
        e.homogeneity = e.homogeneity.max(rel);

        let mut acc = MvAccumulator::new(p).unwrap();
        acc.update(&img).unwrap();
        let mv = acc.finalize().unwrap();
        e.mv_single_frame = e.mv_single_frame.max(max_abs_diff(&mv.values, &base.values));
        let r = compute_rhog(std::slice::from_ref(&img), &p).unwrap();
        e.rhog_identity = e.rhog_identity.max(max_abs_diff(&r.values, &base.values));

        let flat = GrayImage::filled(n, n, 0.4).unwrap();
        acc.update(&flat).unwrap();
        for v in [&base, &mapped, &mv, &r, &acc.finalize().unwrap(), &sv_dog(&flat, &p).unwrap()] {
            e.normalization = e.normalization.max(cell_sum_error(v));
        }
    }
    e
}

pub fn camera() -> PinholeCamera {
    PinholeCamera::new(200.0, 63.5, 47.5, 128, 96).unwrap()
}

pub fn scene(kind: SurfaceKind) -> SceneModel {
    build_scene(
        &SceneParams {
            surface: kind,
            ..SceneParams::default()
        },
        11,
    )
    .unwrap()
}

pub fn render(scene: &SceneModel, pose: &Pose) -> RenderedFrame {
    render_view(scene, &camera(), pose, &RenderSettings::default()).unwrap()
}

pub fn oblique(eye: [f64; 3], roll: f64) -> Pose {
    Pose::look_at(Vector3::from(eye), Vector3::new(0.1, -0.05, 0.0), Vector3::z(), roll)
}

pub fn top_down() -> Pose {
    Pose::look_at(Vector3::new(0.2, 0.1, 2.0), Vector3::new(0.2, 0.1, 0.0), Vector3::y(), 0.0)
}

/// Largest relative depth error of rendered planes against ray-plane
/// intersection.
pub fn plane_depth_error() -> f64 {
    let s = scene(SurfaceKind::Plane);
    let cam = camera();
    let mut worst: f64 = 0.0;
    for pose in [oblique([0.7, -0.4, 1.8], 0.1), oblique([-0.5, 0.9, 2.3], -0.3), top_down()] {
        let f = render(&s, &pose);
        for y in 0..cam.height {
            for x in 0..cam.width {
                let d = pose.rotation * Vector3::new((x as f64 - cam.cx) / cam.focal, (y as f64 - cam.cy) / cam.focal, 1.0);
                let z = -pose.translation.z / d.z;
                worst = worst.max((f.depth.get(x, y) - z).abs() / z);
            }
        }
    }
    worst
}

/// Largest a -> b -> a transfer error in pixels on the relief scene, with
/// the number of points visible both ways.
pub fn round_trip_error() -> (f64, usize) {
    let s = scene(SurfaceKind::HeightField);
    let a = render(&s, &oblique([0.6, -0.5, 1.9], 0.05));
    let b = render(&s, &oblique([0.3, -0.8, 1.8], -0.1));
    let (mut worst, mut visible): (f64, usize) = (0.0, 0);
    for y in (6..90).step_by(7) {
        for x in (6..122).step_by(7) {
            let (u, v) = (x as f64 + 0.25, y as f64 + 0.4);
            if let Correspondence::Visible(ub, vb) = ground_truth_correspondence(&a, &b, u, v).unwrap() {
                if let Correspondence::Visible(ua, va) = ground_truth_correspondence(&b, &a, ub, vb).unwrap() {
                    worst = worst.max((ua - u).hypot(va - v));
                    visible += 1;
                }
            }
        }
    }
    (worst, visible)
}

/// Homography induced by the world plane z = 0 from pixels of `a` to `b`.
pub fn plane_homography(cam: &PinholeCamera, a: &Pose, b: &Pose) -> Matrix3<f64> {
    let k = Matrix3::new(cam.focal, 0.0, cam.cx, 0.0, cam.focal, cam.cy, 0.0, 0.0, 1.0);
    let plane_to_image = |p: &Pose| {
        let rt = p.rotation.transpose();
        let t = -(rt * p.translation);
        k * Matrix3::from_columns(&[rt.column(0).into_owned(), rt.column(1).into_owned(), t])
    };
    plane_to_image(b) * plane_to_image(a).try_inverse().unwrap()
}

/// Largest disagreement in pixels between depth-based transfer and the
/// plane homography, with the number of points compared.
pub fn homography_error() -> (f64, usize) {
    let s = scene(SurfaceKind::Plane);
    let (pa, pb) = (oblique([0.8, -0.3, 2.0], 0.0), oblique([0.2, -0.9, 1.7], 0.2));
    let (a, b) = (render(&s, &pa), render(&s, &pb));
    let h = plane_homography(&camera(), &pa, &pb);
    let (mut worst, mut n): (f64, usize) = (0.0, 0);
    for y in (3..94).step_by(5) {
        for x in (3..126).step_by(5) {
            let (u, v) = (x as f64 + 0.3, y as f64 - 0.2);
            let Correspondence::Visible(ub, vb) = ground_truth_correspondence(&a, &b, u, v).unwrap() else {
                continue;
            };
            let q = h * Vector3::new(u, v, 1.0);
            worst = worst.max((q.x / q.z - ub).hypot(q.y / q.z - vb));
            n += 1;
        }
    }
    (worst, n)
}

/// Largest difference between the identity synthesis of a rendered relief
/// patch and the patch itself.
pub fn identity_synthesis_error() -> f64 {
    let s = scene(SurfaceKind::HeightField);
    let f = render(&s, &oblique([0.6, -0.5, 1.9], 0.05));
    let n = 11;
    let r = (n as f64 - 1.0) / 2.0;
    let mut worst: f64 = 0.0;
    for center in [(40.0, 30.0), (80.25, 55.5), (20.0, 70.0)] {
        let surface = LocalSurface::from_frame(&f, 0, center, n).unwrap();
        let view = synthesize_patch(&f.image, &surface, &Matrix3::identity(), DEFAULT_VISIBILITY).unwrap();
        let direct = GrayImage::from_fn(n, n, |j, i| f.image.sample_bilinear(center.0 + j as f64 - r, center.1 + i as f64 - r)).unwrap();
        worst = worst.max(max_abs_diff(view.image.data(), direct.data()));
    }
    worst
}

/// Mean absolute intensity difference between a quarter-turn synthesis on a
/// fronto-parallel plane and the directly rotated patch.
pub fn quarter_turn_error() -> f64 {
    let s = scene(SurfaceKind::Plane);
    let f = render(&s, &top_down());
    let n = 21;
    let (x0, y0) = (40, 30);
    let center = ((x0 + n / 2) as f64, (y0 + n / 2) as f64);
    let surface = LocalSurface::from_frame(&f, 0, center, n).unwrap();
    // turning the surface by -pi/2 about the optical axis is rotate90
    let view = synthesize_patch(&f.image, &surface, &axis_angle(Vector3::z(), -FRAC_PI_2), DEFAULT_VISIBILITY).unwrap();
    let rotated = f.image.crop(x0, y0, n).unwrap().rotate90();
    view.image
        .data()
        .iter()
        .zip(rotated.data())
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        / (n * n) as f64
}
