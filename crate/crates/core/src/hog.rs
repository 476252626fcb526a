//! Sampled gradient orientation densities.
//!
//! For a patch with gradient magnitude `M` and orientation `G`, the density at
//! cell center `x` and orientation bin `b` is
//!
//! ```text
//! h(x, b) = sum_y  K_eps(mu_b - angle G(y)) * N_sigma(x - y) * M(y)
//! ```
//!
//! with the spatial Gaussian truncated at `3 sigma` and bin centers at
//! `mu_b = (b + 0.5) 2pi / B`. Normalizing each cell over its bins gives the
//! contrast-insensitive density (DOG).

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgproc::{angular_kernel, compute_gradient, AngularKernel, GradientField, GrayImage, KernelParams};

/// Cells whose total mass falls below this are treated as empty.
pub const ZERO_MASS: f64 = 1e-12;

/// Spatial kernel support in units of sigma.
pub const TRUNCATION: f64 = 3.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DescriptorParams {
    pub patch_size: usize,
    pub bins: usize,
    pub cells: usize,
    pub eps: f64,
    pub sigma: f64,
    #[serde(default)]
    pub kernel: AngularKernel,
}

impl DescriptorParams {
    /// 16 bins, 4x4 cells, one-bin angular width and `2 sigma = patch_size / 4`.
    pub fn for_patch(patch_size: usize) -> Self {
        let bins = 16;
        Self {
            patch_size,
            bins,
            cells: 4,
            eps: TAU / bins as f64,
            sigma: patch_size as f64 / 8.0,
            kernel: AngularKernel::Triangular,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.patch_size < 3 || self.patch_size.is_multiple_of(2) {
            return Err(Error::InvalidParam(format!(
                "patch size {} must be odd and >= 3",
                self.patch_size
            )));
        }
        if self.bins < 4 || !self.bins.is_multiple_of(4) {
            return Err(Error::InvalidParam(format!(
                "bin count {} must be a multiple of 4",
                self.bins
            )));
        }
        if self.cells == 0 || self.cells > self.patch_size {
            return Err(Error::InvalidParam(format!(
                "{} cells do not fit a {}-pixel patch",
                self.cells, self.patch_size
            )));
        }
        KernelParams {
            eps: self.eps,
            sigma: self.sigma,
        }
        .validate((self.patch_size * self.patch_size) as f64)
    }

    pub fn descriptor_len(&self) -> usize {
        self.cells * self.cells * self.bins
    }

    pub fn bin_center(&self, b: usize) -> f64 {
        (b as f64 + 0.5) * TAU / self.bins as f64
    }

    /// Cell center offsets along one axis, in pixels from the patch's
    /// top-left pixel center.
    pub fn cell_centers(&self) -> Vec<f64> {
        let step = self.patch_size as f64 / self.cells as f64;
        (0..self.cells)
            .map(|c| (c as f64 + 0.5) * step - 0.5)
            .collect()
    }

    pub fn spatial_weight(&self, dx: f64, dy: f64) -> f64 {
        let r2 = dx * dx + dy * dy;
        let cut = TRUNCATION * self.sigma;
        if r2 > cut * cut {
            return 0.0;
        }
        let s2 = self.sigma * self.sigma;
        (-r2 / (2.0 * s2)).exp() / (2.0 * PI * s2)
    }
}

/// Cells x cells lattice of B-bin histograms, stored cell-major then bin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrientationDensity {
    cells: usize,
    bins: usize,
    values: Vec<f64>,
    normalized: bool,
    zero_mass: Vec<bool>,
}

impl OrientationDensity {
    pub fn zeros(cells: usize, bins: usize) -> Self {
        Self {
            cells,
            bins,
            values: vec![0.0; cells * cells * bins],
            normalized: false,
            zero_mass: vec![false; cells * cells],
        }
    }

    pub fn from_values(cells: usize, bins: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != cells * cells * bins {
            return Err(Error::DimensionMismatch {
                expected: cells * cells * bins,
                actual: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidParam("density entries must be finite and nonnegative".into()));
        }
        Ok(Self {
            cells,
            bins,
            values,
            normalized: false,
            zero_mass: vec![false; cells * cells],
        })
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn zero_mass(&self) -> &[bool] {
        &self.zero_mass
    }

    /// Histogram of cell `(row, col)`.
    pub fn cell(&self, row: usize, col: usize) -> &[f64] {
        let start = (row * self.cells + col) * self.bins;
        &self.values[start..start + self.bins]
    }

    pub fn get(&self, row: usize, col: usize, bin: usize) -> f64 {
        self.values[(row * self.cells + col) * self.bins + bin]
    }

    /// Entry-wise accumulation of an unnormalized density of the same shape.
    pub fn add_assign(&mut self, other: &OrientationDensity) {
        debug_assert_eq!(self.values.len(), other.values.len());
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += b;
        }
    }

    pub fn scaled(&self, s: f64) -> OrientationDensity {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= s);
        out
    }
}

/// Which construction produced a descriptor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DescriptorTag {
    /// Single view.
    Sv,
    /// Temporal aggregate over a track.
    Mv,
    /// Marginalized over synthesized viewpoints.
    R,
}

impl DescriptorTag {
    pub fn code(self) -> u8 {
        match self {
            DescriptorTag::Sv => 0,
            DescriptorTag::Mv => 1,
            DescriptorTag::R => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(DescriptorTag::Sv),
            1 => Some(DescriptorTag::Mv),
            2 => Some(DescriptorTag::R),
            _ => None,
        }
    }
}

/// Flattened density: cell-major, then bin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DescriptorVector {
    pub values: Vec<f64>,
    pub tag: DescriptorTag,
    /// Bins per cell, needed by the per-cell divergences.
    pub bins: usize,
}

impl DescriptorVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn cells(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks(self.bins)
    }
}

fn check_window(grad: &GradientField, x0: i64, y0: i64, size: usize) -> Result<()> {
    if x0 < 0
        || y0 < 0
        || x0 as usize + size > grad.width()
        || y0 as usize + size > grad.height()
    {
        return Err(Error::PatchOutOfBounds {
            x: x0,
            y: y0,
            size,
            width: grad.width(),
            height: grad.height(),
        });
    }
    Ok(())
}

/// Unnormalized density over the `patch_size` window whose top-left pixel is
/// `(x0, y0)` in `grad`. Only pixels inside the window vote.
pub fn compute_hog_density(
    grad: &GradientField,
    params: &DescriptorParams,
    x0: i64,
    y0: i64,
) -> Result<OrientationDensity> {
    params.validate()?;
    check_window(grad, x0, y0, params.patch_size)?;
    let (x0, y0) = (x0 as usize, y0 as usize);
    let n = params.patch_size;
    let centers = params.cell_centers();
    let mut out = OrientationDensity::zeros(params.cells, params.bins);
    let mut bin_weights = vec![0.0; params.bins];
    let reach = TRUNCATION * params.sigma;

    for py in 0..n {
        for px in 0..n {
            let m = grad.magnitude(x0 + px, y0 + py);
            let Some(theta) = grad.orientation(x0 + px, y0 + py) else {
                continue;
            };
            for (b, w) in bin_weights.iter_mut().enumerate() {
                *w = angular_kernel(params.bin_center(b), theta, params.eps, params.kernel);
            }
            for (row, &cy) in centers.iter().enumerate() {
                let dy = cy - py as f64;
                if dy.abs() > reach {
                    continue;
                }
                for (col, &cx) in centers.iter().enumerate() {
                    let s = params.spatial_weight(cx - px as f64, dy);
                    if s == 0.0 {
                        continue;
                    }
                    let base = (row * params.cells + col) * params.bins;
                    let sm = s * m;
                    for (b, &w) in bin_weights.iter().enumerate() {
                        if w != 0.0 {
                            out.values[base + b] += w * sm;
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Density of a whole `patch_size` x `patch_size` patch image.
pub fn patch_density(patch: &GrayImage, params: &DescriptorParams) -> Result<OrientationDensity> {
    if patch.width() != params.patch_size || patch.height() != params.patch_size {
        return Err(Error::DimensionMismatch {
            expected: params.patch_size,
            actual: patch.width().max(patch.height()),
        });
    }
    compute_hog_density(&compute_gradient(patch), params, 0, 0)
}

/// Per-cell normalization; empty cells become uniform and are flagged.
pub fn normalize_dog(h: &OrientationDensity) -> OrientationDensity {
    let mut out = h.clone();
    let uniform = 1.0 / h.bins as f64;
    for (cell, flag) in out.values.chunks_mut(h.bins).zip(out.zero_mass.iter_mut()) {
        let total: f64 = cell.iter().sum();
        if total < ZERO_MASS {
            cell.iter_mut().for_each(|v| *v = uniform);
            *flag = true;
        } else {
            cell.iter_mut().for_each(|v| *v /= total);
            *flag = false;
        }
    }
    out.normalized = true;
    out
}

pub fn sample_descriptor(h: &OrientationDensity, tag: DescriptorTag) -> DescriptorVector {
    DescriptorVector {
        values: h.values.clone(),
        tag,
        bins: h.bins,
    }
}

/// Inverse of [`sample_descriptor`] for a square lattice.
pub fn unflatten(v: &DescriptorVector) -> Result<OrientationDensity> {
    let cells2 = v.values.len() / v.bins.max(1);
    let cells = (cells2 as f64).sqrt().round() as usize;
    if v.bins == 0 || cells * cells * v.bins != v.values.len() {
        return Err(Error::format("descriptor", "length is not cells^2 * bins"));
    }
    OrientationDensity::from_values(cells, v.bins, v.values.clone())
}

/// Single-view DOG descriptor of a patch.
pub fn sv_dog(patch: &GrayImage, params: &DescriptorParams) -> Result<DescriptorVector> {
    Ok(sample_descriptor(
        &normalize_dog(&patch_density(patch, params)?),
        DescriptorTag::Sv,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imgproc::{apply_contrast, Contrast};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_patch(rng: &mut ChaCha8Rng, n: usize) -> GrayImage {
        GrayImage::from_fn(n, n, |_, _| rng.random::<f64>()).unwrap()
    }

    #[test]
    fn default_params_match_layout() {
        let p = DescriptorParams::for_patch(21);
        p.validate().unwrap();
        assert_eq!(p.descriptor_len(), 256);
        assert_eq!(2.0 * p.sigma, 21.0 / 4.0);
        let c = DescriptorParams::for_patch(11).cell_centers();
        assert_eq!(c, vec![0.875, 3.625, 6.375, 9.125]);
    }

    #[test]
    fn rejects_bad_params() {
        let mut p = DescriptorParams::for_patch(11);
        p.bins = 6;
        assert!(p.validate().is_err());
        let mut p = DescriptorParams::for_patch(11);
        p.patch_size = 10;
        assert!(p.validate().is_err());
    }

    #[test]
    fn ramp_votes_land_in_zero_bins() {
        let p = DescriptorParams::for_patch(11);
        let ramp = GrayImage::from_fn(11, 11, |x, _| x as f64 / 10.0).unwrap();
        let h = patch_density(&ramp, &p).unwrap();
        for r in 0..4 {
            for c in 0..4 {
                let cell = h.cell(r, c);
                // theta = 0 sits on the boundary between bins 0 and B-1
                assert!(cell[0] > 0.0);
                assert!((cell[0] - cell[15]).abs() < 1e-15);
                assert!(cell[1..15].iter().all(|&v| v == 0.0));
            }
        }
    }

    #[test]
    fn ramp_along_bin_center_fills_one_bin() {
        let p = DescriptorParams::for_patch(11);
        let phi = p.bin_center(0);
        let (c, s) = (phi.cos(), phi.sin());
        let img = GrayImage::from_fn(11, 11, |x, y| 0.04 * (c * x as f64 + s * y as f64)).unwrap();
        let h = patch_density(&img, &p).unwrap();
        for r in 0..4 {
            for col in 0..4 {
                let cell = h.cell(r, col);
                assert!(cell[0] > 0.0);
                assert!(cell[1..].iter().all(|&v| v < 1e-12 * cell[0]));
            }
        }
    }

    #[test]
    fn constant_patch_is_empty_and_normalizes_uniform() {
        let p = DescriptorParams::for_patch(11);
        let h = patch_density(&GrayImage::filled(11, 11, 0.4).unwrap(), &p).unwrap();
        assert!(h.values().iter().all(|&v| v == 0.0));
        let n = normalize_dog(&h);
        assert!(n.values().iter().all(|&v| v == 1.0 / 16.0));
        assert!(n.zero_mass().iter().all(|&f| f));
    }

    #[test]
    fn normalization_sums_and_cancels_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = DescriptorParams::for_patch(11);
        let h = patch_density(&random_patch(&mut rng, 11), &p).unwrap();
        let n = normalize_dog(&h);
        for cell in n.values().chunks(16) {
            assert!((cell.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let n3 = normalize_dog(&h.scaled(3.0));
        for (a, b) in n.values().iter().zip(n3.values()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn flatten_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = DescriptorParams::for_patch(11);
        let h = patch_density(&random_patch(&mut rng, 11), &p).unwrap();
        let v = sample_descriptor(&h, DescriptorTag::Sv);
        assert_eq!(v.len(), 256);
        assert_eq!(unflatten(&v).unwrap().values(), h.values());
        let u = sample_descriptor(&normalize_dog(&OrientationDensity::zeros(4, 16)), DescriptorTag::Sv);
        assert!(u.values.iter().all(|&x| x == 1.0 / 16.0));
    }

    #[test]
    fn window_must_fit() {
        let p = DescriptorParams::for_patch(11);
        let g = compute_gradient(&GrayImage::filled(20, 20, 0.0).unwrap());
        assert!(compute_hog_density(&g, &p, 9, 9).is_ok());
        assert!(matches!(
            compute_hog_density(&g, &p, 10, 0),
            Err(Error::PatchOutOfBounds { .. })
        ));
        assert!(compute_hog_density(&g, &p, -1, 0).is_err());
    }

    #[test]
    fn unnormalized_density_is_homogeneous_in_gain() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = DescriptorParams::for_patch(11);
        let img = random_patch(&mut rng, 11);
        let h = patch_density(&img, &p).unwrap();
        let (a, b) = (0.6, 0.15);
        let h2 = patch_density(&apply_contrast(&img, &Contrast::Affine { a, b }).unwrap(), &p).unwrap();
        for (x, y) in h.values().iter().zip(h2.values()) {
            assert!((a * x - y).abs() < 1e-9);
        }
    }
}
