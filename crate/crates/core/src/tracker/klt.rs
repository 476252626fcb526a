//! Inverse-compositional translational Lucas-Kanade.

use serde::{Deserialize, Serialize};

use crate::imgproc::GrayImage;

/// Structure tensors worse conditioned than this are treated as flat.
pub const MAX_CONDITION: f64 = 1e4;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KltParams {
    pub max_iters: usize,
    /// Mean absolute residual above which the step is rejected.
    pub reject_thresh: f64,
    /// Update norm (pixels) below which iteration stops.
    pub epsilon: f64,
}

impl Default for KltParams {
    fn default() -> Self {
        Self {
            max_iters: 30,
            reject_thresh: 0.04,
            epsilon: 1e-4,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum KltOutcome {
    Tracked { x: f64, y: f64, residual: f64 },
    Rejected(RejectReason),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RejectReason {
    OutOfBounds,
    IllConditioned,
    Residual,
    Diverged,
}

fn fits(img: &GrayImage, x: f64, y: f64, half: f64) -> bool {
    x - half >= 0.0
        && y - half >= 0.0
        && x + half <= (img.width() - 1) as f64
        && y + half <= (img.height() - 1) as f64
}

/// Condition number of a symmetric 2x2 matrix; infinite when singular.
pub fn condition_number(a: f64, b: f64, c: f64) -> f64 {
    let tr = a + c;
    let disc = ((a - c) * (a - c) + 4.0 * b * b).sqrt();
    let hi = 0.5 * (tr + disc);
    let lo = 0.5 * (tr - disc);
    if lo <= 1e-12 * hi.max(1e-300) || lo <= 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Tracks the `window`-sized neighborhood of `(x, y)` in `prev` into `next`,
/// starting the search at `init` (defaults to the same position).
pub fn klt_step_from(
    prev: &GrayImage,
    next: &GrayImage,
    pos: (f64, f64),
    init: (f64, f64),
    window: usize,
    params: &KltParams,
) -> KltOutcome {
    let half = (window / 2) as f64;
    let (x, y) = pos;
    // template gradients use one extra pixel on each side
    if !fits(prev, x, y, half + 1.0) {
        return KltOutcome::Rejected(RejectReason::OutOfBounds);
    }
    let r = (window / 2) as i64;
    let n = window * window;
    let mut tmpl = Vec::with_capacity(n);
    let mut grads = Vec::with_capacity(n);
    let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
    for dy in -r..=r {
        for dx in -r..=r {
            let (px, py) = (x + dx as f64, y + dy as f64);
            tmpl.push(prev.sample_bilinear(px, py));
            let gx = 0.5 * (prev.sample_bilinear(px + 1.0, py) - prev.sample_bilinear(px - 1.0, py));
            let gy = 0.5 * (prev.sample_bilinear(px, py + 1.0) - prev.sample_bilinear(px, py - 1.0));
            a += gx * gx;
            b += gx * gy;
            c += gy * gy;
            grads.push((gx, gy));
        }
    }
    if condition_number(a, b, c) > MAX_CONDITION {
        return KltOutcome::Rejected(RejectReason::IllConditioned);
    }
    let det = a * c - b * b;
    let (mut px, mut py) = init;
    for _ in 0..params.max_iters {
        if !fits(next, px, py, half) {
            return KltOutcome::Rejected(RejectReason::OutOfBounds);
        }
        let (mut sx, mut sy) = (0.0, 0.0);
        let mut k = 0;
        for dy in -r..=r {
            for dx in -r..=r {
                let e = next.sample_bilinear(px + dx as f64, py + dy as f64) - tmpl[k];
                sx += grads[k].0 * e;
                sy += grads[k].1 * e;
                k += 1;
            }
        }
        let ux = (c * sx - b * sy) / det;
        let uy = (a * sy - b * sx) / det;
        px -= ux;
        py -= uy;
        if !px.is_finite() || !py.is_finite() || (px - init.0).abs() > 2.0 * window as f64 || (py - init.1).abs() > 2.0 * window as f64 {
            return KltOutcome::Rejected(RejectReason::Diverged);
        }
        if ux * ux + uy * uy < params.epsilon * params.epsilon {
            break;
        }
    }
    if !fits(next, px, py, half) {
        return KltOutcome::Rejected(RejectReason::OutOfBounds);
    }
    let mut res = 0.0;
    let mut k = 0;
    for dy in -r..=r {
        for dx in -r..=r {
            res += (next.sample_bilinear(px + dx as f64, py + dy as f64) - tmpl[k]).abs();
            k += 1;
        }
    }
    res /= n as f64;
    if res > params.reject_thresh {
        return KltOutcome::Rejected(RejectReason::Residual);
    }
    KltOutcome::Tracked { x: px, y: py, residual: res }
}

/// One tracking step starting from the previous position.
pub fn klt_step(prev: &GrayImage, next: &GrayImage, pos: (f64, f64), window: usize, params: &KltParams) -> KltOutcome {
    klt_step_from(prev, next, pos, pos, window, params)
}
