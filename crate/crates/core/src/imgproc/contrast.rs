use serde::{Deserialize, Serialize};

use super::GrayImage;
use crate::error::{Error, Result};

/// Strictly increasing range transformation of an image.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Contrast {
    Affine { a: f64, b: f64 },
    Gamma { gamma: f64 },
    /// Samples of a monotone curve at evenly spaced inputs over `[0, 1]`,
    /// linearly interpolated; output clipped to `[0, 1]`.
    Table { values: Vec<f64> },
}

impl Contrast {
    pub fn identity() -> Self {
        Contrast::Affine { a: 1.0, b: 0.0 }
    }

    fn check(&self) -> Result<()> {
        match self {
            Contrast::Affine { a, .. } if !(*a > 0.0) => Err(Error::NonMonotoneContrast),
            Contrast::Gamma { gamma } if !(*gamma > 0.0 && gamma.is_finite()) => {
                Err(Error::NonMonotoneContrast)
            }
            Contrast::Table { values } => {
                if values.len() < 2 || values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidParam("contrast table needs >= 2 finite samples".into()));
                }
                if values.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::NonMonotoneContrast);
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Applies the transform to a single intensity.
    pub fn map(&self, v: f64) -> f64 {
        match self {
            Contrast::Affine { a, b } => a * v + b,
            Contrast::Gamma { gamma } => v.powf(*gamma),
            Contrast::Table { values } => {
                let n = values.len() - 1;
                let t = v.clamp(0.0, 1.0) * n as f64;
                let i = (t.floor() as usize).min(n - 1);
                let f = t - i as f64;
                (values[i] * (1.0 - f) + values[i + 1] * f).clamp(0.0, 1.0)
            }
        }
    }
}

pub fn apply_contrast(img: &GrayImage, kind: &Contrast) -> Result<GrayImage> {
    kind.check()?;
    let data: Vec<f64> = img.data().iter().map(|&v| kind.map(v)).collect();
    if data.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::ContrastOutOfRange);
    }
    GrayImage::new(img.width(), img.height(), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp() -> GrayImage {
        GrayImage::from_fn(6, 4, |x, _| x as f64 / 5.0).unwrap()
    }

    #[test]
    fn affine_identity_and_half_slope() {
        let r = ramp();
        assert_eq!(apply_contrast(&r, &Contrast::identity()).unwrap(), r);
        let h = apply_contrast(&r, &Contrast::Affine { a: 0.5, b: 0.25 }).unwrap();
        for x in 0..5 {
            assert!((h.get(x + 1, 0) - h.get(x, 0) - 0.1).abs() < 1e-15);
        }
        assert_eq!(h.get(0, 0), 0.25);
    }

    #[test]
    fn gamma_squares() {
        let img = GrayImage::filled(3, 3, 0.5).unwrap();
        let g = apply_contrast(&img, &Contrast::Gamma { gamma: 2.0 }).unwrap();
        assert_eq!(g.get(1, 1), 0.25);
    }

    #[test]
    fn table_must_increase() {
        let bad = Contrast::Table { values: vec![0.0, 0.5, 0.5, 1.0] };
        assert!(matches!(apply_contrast(&ramp(), &bad), Err(Error::NonMonotoneContrast)));
        let good = Contrast::Table { values: vec![-0.2, 0.3, 1.4] };
        let out = apply_contrast(&ramp(), &good).unwrap();
        assert_eq!(out.get(0, 0), 0.0);
        assert_eq!(out.get(5, 0), 1.0);
        assert!((out.get(2, 0) - 0.2).abs() < 1e-12);
    }

    #[test]
    fn rejects_decreasing_and_out_of_range() {
        assert!(apply_contrast(&ramp(), &Contrast::Affine { a: -1.0, b: 1.0 }).is_err());
        assert!(matches!(
            apply_contrast(&ramp(), &Contrast::Affine { a: 1.0, b: 0.5 }),
            Err(Error::ContrastOutOfRange)
        ));
    }
}
