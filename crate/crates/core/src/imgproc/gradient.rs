use std::f64::consts::TAU;

use super::GrayImage;

/// Per-pixel gradient vector with its magnitude and orientation.
///
/// Orientation is the signed angle in `[0, 2pi)` measured from the +x axis in
/// image coordinates (x right, y down). It is only meaningful where `valid`
/// is set, which happens exactly where the magnitude is nonzero.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientField {
    width: usize,
    height: usize,
    gx: Vec<f64>,
    gy: Vec<f64>,
    magnitude: Vec<f64>,
    orientation: Vec<f64>,
    valid: Vec<bool>,
}

impl GradientField {
    pub(crate) fn from_components(width: usize, height: usize, gx: Vec<f64>, gy: Vec<f64>) -> Self {
        let n = width * height;
        let mut magnitude = Vec::with_capacity(n);
        let mut orientation = Vec::with_capacity(n);
        let mut valid = Vec::with_capacity(n);
        for (&dx, &dy) in gx.iter().zip(&gy) {
            let m = dx.hypot(dy);
            magnitude.push(m);
            if m > 0.0 {
                orientation.push(wrap_angle(dy.atan2(dx)));
                valid.push(true);
            } else {
                orientation.push(0.0);
                valid.push(false);
            }
        }
        Self {
            width,
            height,
            gx,
            gy,
            magnitude,
            orientation,
            valid,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn magnitude(&self, x: usize, y: usize) -> f64 {
        self.magnitude[y * self.width + x]
    }

    /// Orientation in `[0, 2pi)`, or `None` where the gradient vanishes.
    #[inline]
    pub fn orientation(&self, x: usize, y: usize) -> Option<f64> {
        let i = y * self.width + x;
        self.valid[i].then_some(self.orientation[i])
    }

    #[inline]
    pub fn vector(&self, x: usize, y: usize) -> (f64, f64) {
        let i = y * self.width + x;
        (self.gx[i], self.gy[i])
    }

    pub fn valid_mask(&self) -> &[bool] {
        &self.valid
    }

    pub fn magnitudes(&self) -> &[f64] {
        &self.magnitude
    }
}

/// Maps any finite angle into `[0, 2pi)`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// Central differences in the interior, one-sided differences on the border.
pub fn compute_gradient(img: &GrayImage) -> GradientField {
    let (w, h) = (img.width(), img.height());
    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            gx[y * w + x] = if x == 0 {
                img.get(1, y) - img.get(0, y)
            } else if x == w - 1 {
                img.get(w - 1, y) - img.get(w - 2, y)
            } else {
                0.5 * (img.get(x + 1, y) - img.get(x - 1, y))
            };
            gy[y * w + x] = if y == 0 {
                img.get(x, 1) - img.get(x, 0)
            } else if y == h - 1 {
                img.get(x, h - 1) - img.get(x, h - 2)
            } else {
                0.5 * (img.get(x, y + 1) - img.get(x, y - 1))
            };
        }
    }
    GradientField::from_components(w, h, gx, gy)
}
