use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::camera::Pose;
use crate::error::{Error, Result};
use crate::imgproc::GrayImage;

/// Height field `z = f(x, y)` given by a uniform cubic B-spline over a square
/// grid of control heights centered on the object origin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeightField {
    /// Control points per side.
    pub grid: usize,
    /// Control point spacing in meters.
    pub spacing: f64,
    /// Row-major control heights.
    pub coeffs: Vec<f64>,
}

fn bspline_basis(t: f64) -> [f64; 4] {
    let t2 = t * t;
    let t3 = t2 * t;
    [
        (1.0 - 3.0 * t + 3.0 * t2 - t3) / 6.0,
        (4.0 - 6.0 * t2 + 3.0 * t3) / 6.0,
        (1.0 + 3.0 * t + 3.0 * t2 - 3.0 * t3) / 6.0,
        t3 / 6.0,
    ]
}

fn bspline_deriv(t: f64) -> [f64; 4] {
    let t2 = t * t;
    [
        (-3.0 + 6.0 * t - 3.0 * t2) / 6.0,
        (-12.0 * t + 9.0 * t2) / 6.0,
        (3.0 + 6.0 * t - 9.0 * t2) / 6.0,
        3.0 * t2 / 6.0,
    ]
}

impl HeightField {
    pub fn random(grid: usize, spacing: f64, amplitude: f64, rng: &mut impl Rng) -> Self {
        let coeffs = (0..grid * grid)
            .map(|_| amplitude * (2.0 * rng.random::<f64>() - 1.0))
            .collect();
        Self {
            grid,
            spacing,
            coeffs,
        }
    }

    /// Upper bound on `|f|` (B-spline convex hull property).
    pub fn bound(&self) -> f64 {
        self.coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs()))
    }

    fn coeff(&self, i: i64, j: i64) -> f64 {
        let g = self.grid as i64 - 1;
        self.coeffs[(j.clamp(0, g) * self.grid as i64 + i.clamp(0, g)) as usize]
    }

    fn locate(&self, x: f64) -> (i64, f64) {
        let half = 0.5 * (self.grid - 1) as f64 * self.spacing;
        let u = (x + half) / self.spacing;
        let i = u.floor();
        (i as i64, u - i)
    }

    /// Height and its partial derivatives at `(x, y)`.
    pub fn eval(&self, x: f64, y: f64) -> (f64, f64, f64) {
        let (i, tx) = self.locate(x);
        let (j, ty) = self.locate(y);
        let (bx, by) = (bspline_basis(tx), bspline_basis(ty));
        let (dx, dy) = (bspline_deriv(tx), bspline_deriv(ty));
        let (mut h, mut hx, mut hy) = (0.0, 0.0, 0.0);
        for b in 0..4 {
            for a in 0..4 {
                let c = self.coeff(i + a as i64 - 1, j + b as i64 - 1);
                h += c * bx[a] * by[b];
                hx += c * dx[a] * by[b];
                hy += c * bx[a] * dy[b];
            }
        }
        (h, hx / self.spacing, hy / self.spacing)
    }

    pub fn height(&self, x: f64, y: f64) -> f64 {
        self.eval(x, y).0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Surface {
    /// The object's `z = 0` plane.
    Plane,
    HeightField(HeightField),
}

/// Textured surface over the square `[-extent, extent]^2` of its object frame.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneModel {
    pub surface: Surface,
    /// Radiance, sampled bilinearly with wrap-around.
    pub texture: GrayImage,
    pub texels_per_meter: f64,
    pub extent: f64,
    /// Object-to-world placement.
    pub placement: Pose,
    /// Intensity of rays that miss the surface.
    pub background: f64,
}

/// A ray hit in object coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hit {
    /// Ray parameter for the direction passed to [`SceneModel::intersect`].
    pub t: f64,
    pub point: Vector3<f64>,
}

impl SceneModel {
    /// Radiance at object-frame location `(x, y)`.
    pub fn radiance(&self, x: f64, y: f64) -> f64 {
        sample_wrapped(&self.texture, x * self.texels_per_meter, y * self.texels_per_meter)
    }

    /// Unit normal at object-frame `(x, y)`, pointing toward `+z`.
    pub fn normal(&self, x: f64, y: f64) -> Vector3<f64> {
        match &self.surface {
            Surface::Plane => Vector3::z(),
            Surface::HeightField(hf) => {
                let (_, hx, hy) = hf.eval(x, y);
                Vector3::new(-hx, -hy, 1.0).normalize()
            }
        }
    }

    fn inside(&self, p: &Vector3<f64>) -> bool {
        p.x.abs() <= self.extent && p.y.abs() <= self.extent
    }

    /// First intersection of `origin + t * dir` (object frame, `t > 0`).
    pub fn intersect(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<Hit> {
        match &self.surface {
            Surface::Plane => {
                if dir.z == 0.0 {
                    return None;
                }
                let t = -origin.z / dir.z;
                let point = origin + dir * t;
                (t > 0.0 && self.inside(&point)).then_some(Hit { t, point })
            }
            Surface::HeightField(hf) => self.march(hf, origin, dir),
        }
    }

    fn march(&self, hf: &HeightField, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<Hit> {
        let bound = hf.bound() + 1e-9;
        let gap = |t: f64| {
            let p = origin + dir * t;
            p.z - hf.height(p.x, p.y)
        };
        // restrict to the slab |z| <= bound
        let (t0, t1) = if dir.z.abs() < 1e-15 {
            if origin.z.abs() > bound {
                return None;
            }
            (0.0, 4.0 * self.extent / dir.xy().norm().max(1e-15))
        } else {
            let ta = (bound - origin.z) / dir.z;
            let tb = (-bound - origin.z) / dir.z;
            (ta.min(tb).max(0.0), ta.max(tb))
        };
        if t1 <= t0 {
            return None;
        }
        if gap(t0) < 0.0 {
            // ray starts below the surface
            return None;
        }
        let horizontal = dir.xy().norm() * (t1 - t0);
        let steps = ((horizontal / (0.125 * hf.spacing)).ceil() as usize).clamp(4, 4096);
        let dt = (t1 - t0) / steps as f64;
        let mut prev = t0;
        for k in 1..=steps {
            let t = t0 + dt * k as f64;
            if gap(t) < 0.0 {
                let (mut lo, mut hi) = (prev, t);
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    if gap(mid) < 0.0 {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                let t = 0.5 * (lo + hi);
                let point = origin + dir * t;
                return self.inside(&point).then_some(Hit { t, point });
            }
            prev = t;
        }
        None
    }
}

/// Bilinear sample with periodic wrap-around in both axes.
pub fn sample_wrapped(img: &GrayImage, x: f64, y: f64) -> f64 {
    let (w, h) = (img.width() as i64, img.height() as i64);
    let (xf, yf) = (x.floor(), y.floor());
    let (fx, fy) = (x - xf, y - yf);
    let (x0, y0) = ((xf as i64).rem_euclid(w), (yf as i64).rem_euclid(h));
    let (x1, y1) = ((x0 + 1) % w, (y0 + 1) % h);
    let at = |x: i64, y: i64| img.get(x as usize, y as usize);
    let top = at(x0, y0) * (1.0 - fx) + at(x1, y0) * fx;
    let bottom = at(x0, y1) * (1.0 - fx) + at(x1, y1) * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Parameters of the procedural "city" texture: rectangles of random
/// intensity over multi-octave value noise, blurred and tileable.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TextureParams {
    pub size: usize,
    pub rectangles: usize,
    pub min_rect: usize,
    pub max_rect: usize,
    pub noise_amplitude: f64,
    pub blur_sigma: f64,
}

impl Default for TextureParams {
    fn default() -> Self {
        Self {
            size: 512,
            rectangles: 900,
            min_rect: 4,
            max_rect: 40,
            noise_amplitude: 0.25,
            blur_sigma: 1.0,
        }
    }
}

fn value_noise(size: usize, cell: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = size.div_ceil(cell);
    let lattice: Vec<f64> = (0..n * n).map(|_| rng.random::<f64>()).collect();
    let at = |i: usize, j: usize| lattice[(j % n) * n + (i % n)];
    let mut out = vec![0.0; size * size];
    for y in 0..size {
        for x in 0..size {
            let (gx, gy) = (x as f64 / cell as f64, y as f64 / cell as f64);
            let (i, j) = (gx.floor() as usize, gy.floor() as usize);
            let (fx, fy) = (gx - i as f64, gy - j as f64);
            // smoothstep interpolation
            let (sx, sy) = (fx * fx * (3.0 - 2.0 * fx), fy * fy * (3.0 - 2.0 * fy));
            let top = at(i, j) * (1.0 - sx) + at(i + 1, j) * sx;
            let bottom = at(i, j + 1) * (1.0 - sx) + at(i + 1, j + 1) * sx;
            out[y * size + x] = top * (1.0 - sy) + bottom * sy;
        }
    }
    out
}

fn blur_wrapped(data: &[f64], size: usize, sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return data.to_vec();
    }
    let r = (3.0 * sigma).ceil() as i64;
    let kernel: Vec<f64> = (-r..=r).map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let norm: f64 = kernel.iter().sum();
    let n = size as i64;
    let mut tmp = vec![0.0; data.len()];
    for y in 0..n {
        for x in 0..n {
            let mut s = 0.0;
            for (k, w) in (-r..=r).zip(&kernel) {
                s += w * data[(y * n + (x + k).rem_euclid(n)) as usize];
            }
            tmp[(y * n + x) as usize] = s / norm;
        }
    }
    let mut out = vec![0.0; data.len()];
    for y in 0..n {
        for x in 0..n {
            let mut s = 0.0;
            for (k, w) in (-r..=r).zip(&kernel) {
                s += w * tmp[((y + k).rem_euclid(n) * n + x) as usize];
            }
            out[(y * n + x) as usize] = s / norm;
        }
    }
    out
}

pub fn generate_texture(params: &TextureParams, seed: u64) -> Result<GrayImage> {
    let size = params.size;
    if size < 16 || params.min_rect == 0 || params.max_rect < params.min_rect {
        return Err(Error::InvalidParam("texture parameters out of range".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coarse = value_noise(size, (size / 8).max(2), &mut rng);
    let fine = value_noise(size, (size / 64).max(2), &mut rng);
    let mut data: Vec<f64> = coarse
        .iter()
        .zip(&fine)
        .map(|(c, f)| 0.5 + params.noise_amplitude * (0.7 * (c - 0.5) + 0.6 * (f - 0.5)))
        .collect();
    for _ in 0..params.rectangles {
        let w = rng.random_range(params.min_rect..=params.max_rect);
        let h = rng.random_range(params.min_rect..=params.max_rect);
        let x0 = rng.random_range(0..size);
        let y0 = rng.random_range(0..size);
        let value = rng.random::<f64>();
        let alpha = rng.random_range(0.5..1.0);
        for y in y0..y0 + h {
            for x in x0..x0 + w {
                let i = (y % size) * size + (x % size);
                data[i] = (1.0 - alpha) * data[i] + alpha * value;
            }
        }
    }
    let data = blur_wrapped(&data, size, params.blur_sigma)
        .into_iter()
        .map(|v| v.clamp(0.0, 1.0))
        .collect();
    GrayImage::new(size, size, data)
}
