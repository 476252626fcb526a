use super::GrayImage;
use crate::error::{Error, Result};

pub const MAX_LEVELS: usize = 5;

/// Dyadic image pyramid: level `k` is the base downsampled by `2^k`.
#[derive(Clone, Debug)]
pub struct ImagePyramid {
    levels: Vec<GrayImage>,
}

impl ImagePyramid {
    pub fn levels(&self) -> &[GrayImage] {
        &self.levels
    }

    pub fn level(&self, k: usize) -> &GrayImage {
        &self.levels[k]
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }
}

/// Maps a base-resolution coordinate onto level `level` (pixel centers at
/// integers, each level pixel covering a 2x2 block of the one below).
pub fn to_level(coord: f64, level: usize) -> f64 {
    let s = (1u64 << level) as f64;
    (coord + 0.5) / s - 0.5
}

/// Inverse of [`to_level`].
pub fn to_base(coord: f64, level: usize) -> f64 {
    let s = (1u64 << level) as f64;
    (coord + 0.5) * s - 0.5
}

/// 2x2 box filter followed by 2x subsampling; odd trailing rows/columns
/// replicate the border pixel.
pub fn downsample(img: &GrayImage) -> GrayImage {
    let w = img.width().div_ceil(2);
    let h = img.height().div_ceil(2);
    let mut data = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let (sx, sy) = (2 * x as i64, 2 * y as i64);
            let s = img.get_clamped(sx, sy)
                + img.get_clamped(sx + 1, sy)
                + img.get_clamped(sx, sy + 1)
                + img.get_clamped(sx + 1, sy + 1);
            data.push(0.25 * s);
        }
    }
    GrayImage::from_raw_unchecked(w, h, data)
}

pub fn build_pyramid(img: &GrayImage, levels: usize) -> Result<ImagePyramid> {
    if levels == 0 || levels > MAX_LEVELS {
        return Err(Error::InvalidParam(format!(
            "pyramid levels must be in 1..={MAX_LEVELS}, got {levels}"
        )));
    }
    let need = 3usize << (levels - 1);
    if img.width() < need || img.height() < need {
        return Err(Error::PyramidTooSmall {
            width: img.width(),
            height: img.height(),
            levels,
        });
    }
    let mut out = Vec::with_capacity(levels);
    out.push(img.clone());
    for k in 1..levels {
        let next = downsample(&out[k - 1]);
        out.push(next);
    }
    Ok(ImagePyramid { levels: out })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn halving_sizes() {
        let img = GrayImage::filled(48, 48, 0.3).unwrap();
        let p = build_pyramid(&img, 5).unwrap();
        let sizes: Vec<_> = p.levels().iter().map(|l| l.width()).collect();
        assert_eq!(sizes, vec![48, 24, 12, 6, 3]);
        for l in p.levels() {
            assert!(l.data().iter().all(|&v| v == 0.3));
        }
    }

    #[test]
    fn odd_sizes_round_up() {
        let img = GrayImage::filled(25, 13, 0.5).unwrap();
        let p = build_pyramid(&img, 2).unwrap();
        assert_eq!((p.level(1).width(), p.level(1).height()), (13, 7));
    }

    #[test]
    fn checkerboard_averages_to_mean() {
        let img = GrayImage::from_fn(16, 16, |x, y| if (x + y) % 2 == 0 { 0.9 } else { 0.1 }).unwrap();
        let p = build_pyramid(&img, 2).unwrap();
        assert!(p.level(1).data().iter().all(|&v| (v - 0.5).abs() < 1e-15));
    }

    #[test]
    fn too_small_is_rejected() {
        let img = GrayImage::filled(47, 48, 0.0).unwrap();
        assert!(matches!(build_pyramid(&img, 5), Err(Error::PyramidTooSmall { .. })));
        assert!(build_pyramid(&img, 6).is_err());
    }

    #[test]
    fn level_coordinates_round_trip() {
        for l in 0..5 {
            let c = 17.25;
            assert!((to_base(to_level(c, l), l) - c).abs() < 1e-12);
        }
        assert_eq!(to_level(0.5, 1), 0.0);
    }
}
