//! Segment-test corner detector on a 16-pixel Bresenham circle.

use serde::{Deserialize, Serialize};

use crate::imgproc::{to_base, GrayImage, ImagePyramid};

/// Circle of radius 3, clockwise from the top.
pub const CIRCLE: [(i64, i64); 16] = [
    (0, -3),
    (1, -3),
    (2, -2),
    (3, -1),
    (3, 0),
    (3, 1),
    (2, 2),
    (1, 3),
    (0, 3),
    (-1, 3),
    (-2, 2),
    (-3, 1),
    (-3, 0),
    (-3, -1),
    (-2, -2),
    (-1, -3),
];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Keypoint {
    /// Base-resolution coordinates.
    pub x: f64,
    pub y: f64,
    pub level: usize,
    pub score: f64,
}

impl Keypoint {
    /// Position in the coordinates of its own pyramid level.
    pub fn level_position(&self) -> (f64, f64) {
        let s = (1u64 << self.level) as f64;
        ((self.x + 0.5) / s - 0.5, (self.y + 0.5) / s - 0.5)
    }
}

fn longest_run(flags: &[bool; 16]) -> usize {
    let mut best = 0;
    let mut run = 0;
    // walk the circle twice to catch runs that wrap
    for k in 0..32 {
        if flags[k % 16] {
            run += 1;
            best = best.max(run);
        } else {
            run = 0;
        }
    }
    best.min(16)
}

/// Segment-test score at `(x, y)`: `None` unless at least `arc` contiguous
/// circle pixels are all brighter than `p + t` or all darker than `p - t`.
/// The score is the larger of the summed excesses over the brighter and
/// darker sets.
pub fn segment_test(img: &GrayImage, x: usize, y: usize, t: f64, arc: usize) -> Option<f64> {
    let p = img.get(x, y);
    let mut bright = [false; 16];
    let mut dark = [false; 16];
    let (mut sb, mut sd) = (0.0, 0.0);
    for (k, &(dx, dy)) in CIRCLE.iter().enumerate() {
        let c = img.get((x as i64 + dx) as usize, (y as i64 + dy) as usize);
        if c > p + t {
            bright[k] = true;
            sb += c - p - t;
        } else if c < p - t {
            dark[k] = true;
            sd += p - c - t;
        }
    }
    (longest_run(&bright) >= arc || longest_run(&dark) >= arc).then_some(sb.max(sd))
}

/// All segment-test corners of one image, `(x, y, score)` in raster order.
pub fn corners(img: &GrayImage, t: f64, arc: usize) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::new();
    if img.width() < 7 || img.height() < 7 {
        return out;
    }
    for y in 3..img.height() - 3 {
        for x in 3..img.width() - 3 {
            if let Some(s) = segment_test(img, x, y, t, arc) {
                out.push((x, y, s));
            }
        }
    }
    out
}

/// Greedy suppression: strongest first, dropping any corner closer than
/// `min_dist` to one already kept. Ties go to raster order.
pub fn suppress(mut cands: Vec<(usize, usize, f64)>, min_dist: f64) -> Vec<(usize, usize, f64)> {
    cands.sort_by(|a, b| {
        b.2.total_cmp(&a.2)
            .then(a.1.cmp(&b.1))
            .then(a.0.cmp(&b.0))
    });
    let mut kept: Vec<(usize, usize, f64)> = Vec::new();
    let d2 = min_dist * min_dist;
    for c in cands {
        let far = kept.iter().all(|k| {
            let dx = k.0 as f64 - c.0 as f64;
            let dy = k.1 as f64 - c.1 as f64;
            dx * dx + dy * dy >= d2
        });
        if far {
            kept.push(c);
        }
    }
    kept
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorParams {
    pub arc: usize,
    pub min_threshold: f64,
    pub max_threshold: f64,
    pub bisection_steps: usize,
    /// Accepted relative deviation from the target count.
    pub tolerance: f64,
}

impl Default for DetectorParams {
    fn default() -> Self {
        Self {
            arc: 9,
            min_threshold: 0.005,
            max_threshold: 0.5,
            bisection_steps: 24,
            tolerance: 0.2,
        }
    }
}

fn detect_at(pyr: &ImagePyramid, t: f64, min_dist: f64, arc: usize) -> Vec<Keypoint> {
    let mut out = Vec::new();
    for (level, img) in pyr.levels().iter().enumerate() {
        for (x, y, score) in suppress(corners(img, t, arc), min_dist) {
            out.push(Keypoint {
                x: to_base(x as f64, level),
                y: to_base(y as f64, level),
                level,
                score,
            });
        }
    }
    out.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.level.cmp(&b.level))
            .then(a.y.total_cmp(&b.y))
            .then(a.x.total_cmp(&b.x))
    });
    out
}

/// Detects corners on every pyramid level, bisecting the brightness
/// threshold until the total count is within `tolerance` of `target_count`
/// (or the bisection runs out, in which case the closest count wins).
pub fn detect_corners(pyr: &ImagePyramid, target_count: usize, min_dist: f64, params: &DetectorParams) -> Vec<Keypoint> {
    let target = target_count as f64;
    let (mut lo, mut hi) = (params.min_threshold, params.max_threshold);
    let mut best: Option<Vec<Keypoint>> = None;
    let mut best_err = f64::INFINITY;
    for _ in 0..params.bisection_steps {
        let t = 0.5 * (lo + hi);
        let kps = detect_at(pyr, t, min_dist, params.arc);
        let n = kps.len() as f64;
        let err = (n - target).abs();
        if err < best_err {
            best_err = err;
            best = Some(kps);
        }
        if err <= params.tolerance * target {
            break;
        }
        if n > target {
            lo = t;
        } else {
            hi = t;
        }
    }
    let mut out = best.unwrap_or_default();
    if out.len() < target_count {
        // the lowest threshold gives the most corners available
        let all = detect_at(pyr, params.min_threshold, min_dist, params.arc);
        if all.len() <= target_count || out.is_empty() {
            out = all;
        }
    }
    out
}
