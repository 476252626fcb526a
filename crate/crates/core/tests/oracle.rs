//! Library results against direct, independent evaluations.

mod support;

use std::f64::consts::TAU;

use mvdesc::hog::{compute_hog_density, DescriptorParams, DescriptorVector};
use mvdesc::imgproc::compute_gradient;
use mvdesc::matchdb::{distance, Metric};
use mvdesc::rhog::maxout_match;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use support::{angular, density_oracle_max_error, nn_oracle_mismatches, random_descriptor, random_patch, spatial};

#[test]
fn density_matches_brute_force_on_50_patches() {
    let worst = density_oracle_max_error(50);
    assert!(worst <= 1e-9, "max abs error {worst:e}");
}

#[test]
fn window_inside_a_larger_gradient_field() {
    let mut rng = ChaCha8Rng::seed_from_u64(51);
    let big = random_patch(&mut rng, 30);
    let p = DescriptorParams::for_patch(11);
    let grad = compute_gradient(&big);
    let got = compute_hog_density(&grad, &p, 7, 12).unwrap();
    // interior window: central differences of the big image
    let n = 11;
    let mut want = vec![0.0; p.descriptor_len()];
    let step = n as f64 / p.cells as f64;
    for y in 0..n {
        for x in 0..n {
            let (bx, by) = (x + 7, y + 12);
            let gx = 0.5 * (big.get(bx + 1, by) - big.get(bx - 1, by));
            let gy = 0.5 * (big.get(bx, by + 1) - big.get(bx, by - 1));
            let m = gx.hypot(gy);
            let theta = gy.atan2(gx).rem_euclid(TAU);
            for row in 0..p.cells {
                for col in 0..p.cells {
                    let cx = (col as f64 + 0.5) * step - 0.5;
                    let cy = (row as f64 + 0.5) * step - 0.5;
                    let s = spatial(cx - x as f64, cy - y as f64, p.sigma);
                    for b in 0..p.bins {
                        let mu = (b as f64 + 0.5) * TAU / p.bins as f64;
                        want[(row * p.cells + col) * p.bins + b] += angular(theta, mu, p.eps, p.kernel) * s * m;
                    }
                }
            }
        }
    }
    for (a, b) in got.values().iter().zip(&want) {
        assert!((a - b).abs() <= 1e-9);
    }
}

#[test]
fn nn_query_matches_linear_scan_on_100_databases() {
    assert_eq!(nn_oracle_mismatches(100), 0);
}

#[test]
fn maxout_matches_exhaustive_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..20 {
        let stored: Vec<DescriptorVector> = (0..10).map(|_| random_descriptor(&mut rng, 4, 8, false)).collect();
        let q = random_descriptor(&mut rng, 4, 8, false);
        let (d, i) = maxout_match(&q, &stored).unwrap();
        let ds: Vec<f64> = stored
            .iter()
            .map(|s| s.values.iter().zip(&q.values).map(|(a, b)| (a - b) * (a - b)).sum())
            .collect();
        let best = ds.iter().cloned().fold(f64::INFINITY, f64::min);
        assert_eq!(d, best);
        assert_eq!(i, ds.iter().position(|&x| x == best).unwrap());
        assert!(ds.iter().all(|&x| d <= x));
    }
}

fn closed_form(a: &[f64], b: &[f64], bins: usize, metric: Metric) -> f64 {
    let smooth = |c: &[f64]| -> Vec<f64> {
        let t: f64 = c.iter().map(|v| v + 1e-8).sum();
        c.iter().map(|v| (v + 1e-8) / t).collect()
    };
    match metric {
        Metric::L1 => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
        Metric::L2 => a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt(),
        Metric::NegCorrelation => {
            let n = a.len() as f64;
            let ma = a.iter().sum::<f64>() / n;
            let mb = b.iter().sum::<f64>() / n;
            let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
            let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
            let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
            1.0 - cov / (va * vb).sqrt()
        }
        Metric::Chi2 => 0.5 * a.iter().zip(b).map(|(x, y)| (x - y).powi(2) / (x + y)).sum::<f64>(),
        Metric::Bhattacharyya => a
            .chunks(bins)
            .zip(b.chunks(bins))
            .map(|(p, q)| -p.iter().zip(q).map(|(x, y)| (x * y).sqrt()).sum::<f64>().ln())
            .sum(),
        Metric::Kl => a
            .chunks(bins)
            .zip(b.chunks(bins))
            .map(|(p, q)| {
                let (p, q) = (smooth(p), smooth(q));
                p.iter().zip(&q).map(|(x, y)| x * (x.ln() - y.ln())).sum::<f64>()
            })
            .sum(),
        Metric::Likelihood => -a
            .chunks(bins)
            .zip(b.chunks(bins))
            .map(|(p, q)| p.iter().zip(&smooth(q)).map(|(x, y)| x * y.ln()).sum::<f64>())
            .sum::<f64>(),
    }
}

#[test]
fn metrics_match_closed_forms_on_random_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..200 {
        let a = random_descriptor(&mut rng, 4, 8, false);
        let b = random_descriptor(&mut rng, 4, 8, false);
        for m in Metric::ALL {
            let got = distance(&a, &b, m).unwrap();
            let want = closed_form(&a.values, &b.values, 8, m);
            assert!((got - want).abs() <= 1e-9 * want.abs().max(1.0), "{}: {got} vs {want}", m.name());
        }
    }
}
