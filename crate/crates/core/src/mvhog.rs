//! Temporal aggregation of per-frame densities over a tracked patch sequence.
//!
//! The accumulator keeps only running sums, so its size does not depend on the
//! number of frames folded into it.

use crate::error::{Error, Result};
use crate::hog::{normalize_dog, patch_density, sample_descriptor, DescriptorParams, DescriptorTag, DescriptorVector, OrientationDensity};
use crate::imgproc::GrayImage;

#[derive(Clone, Debug)]
pub struct MvAccumulator {
    params: DescriptorParams,
    sum: OrientationDensity,
    count: usize,
    patch_sum: Vec<f64>,
    patch_sq_norm_sum: f64,
}

impl MvAccumulator {
    pub fn new(params: DescriptorParams) -> Result<Self> {
        params.validate()?;
        let n = params.patch_size * params.patch_size;
        Ok(Self {
            params,
            sum: OrientationDensity::zeros(params.cells, params.bins),
            count: 0,
            patch_sum: vec![0.0; n],
            patch_sq_norm_sum: 0.0,
        })
    }

    pub fn params(&self) -> &DescriptorParams {
        &self.params
    }

    pub fn frames(&self) -> usize {
        self.count
    }

    pub fn sum(&self) -> &OrientationDensity {
        &self.sum
    }

    /// Folds one frame's patch into the running sums.
    pub fn update(&mut self, patch: &GrayImage) -> Result<()> {
        let h = patch_density(patch, &self.params)?;
        self.update_with_density(patch, &h)
    }

    /// Same as [`update`](Self::update) when the frame's density is already known.
    pub fn update_with_density(&mut self, patch: &GrayImage, h: &OrientationDensity) -> Result<()> {
        if patch.data().len() != self.patch_sum.len() {
            return Err(Error::DimensionMismatch {
                expected: self.patch_sum.len(),
                actual: patch.data().len(),
            });
        }
        self.sum.add_assign(h);
        self.count += 1;
        let mut sq = 0.0;
        for (acc, &v) in self.patch_sum.iter_mut().zip(patch.data()) {
            *acc += v;
            sq += v * v;
        }
        self.patch_sq_norm_sum += sq;
        Ok(())
    }

    /// Combines two accumulators built from disjoint frame sets.
    pub fn merge(&mut self, other: &MvAccumulator) -> Result<()> {
        if other.params != self.params {
            return Err(Error::InvalidParam("cannot merge accumulators with different params".into()));
        }
        self.sum.add_assign(&other.sum);
        self.count += other.count;
        for (a, b) in self.patch_sum.iter_mut().zip(&other.patch_sum) {
            *a += b;
        }
        self.patch_sq_norm_sum += other.patch_sq_norm_sum;
        Ok(())
    }

    /// Mean squared l2 distance of the folded patches to their mean patch.
    pub fn raw_excitation(&self) -> Result<f64> {
        if self.count == 0 {
            return Err(Error::EmptyAccumulator);
        }
        let t = self.count as f64;
        let mean_sq: f64 = self.patch_sum.iter().map(|s| (s / t) * (s / t)).sum();
        Ok((self.patch_sq_norm_sum / t - mean_sq).max(0.0))
    }

    /// Normalized mean density, flattened and tagged as multi-view.
    pub fn finalize(&self) -> Result<DescriptorVector> {
        if self.count == 0 {
            return Err(Error::EmptyAccumulator);
        }
        let mean = self.sum.scaled(1.0 / self.count as f64);
        Ok(sample_descriptor(&normalize_dog(&mean), DescriptorTag::Mv))
    }

    /// Approximate heap footprint in bytes; independent of the frame count.
    pub fn memory_bytes(&self) -> usize {
        std::mem::size_of::<f64>() * (self.sum.values().len() + self.patch_sum.len())
            + self.sum.zero_mass().len()
    }
}

pub fn mv_update(acc: &mut MvAccumulator, patch: &GrayImage) -> Result<()> {
    acc.update(patch)
}

pub fn mv_finalize(acc: &MvAccumulator) -> Result<DescriptorVector> {
    acc.finalize()
}

/// Mean squared l2 distance of each patch to the mean patch.
pub fn raw_excitation(patches: &[GrayImage]) -> Result<f64> {
    let first = patches.first().ok_or(Error::Empty("patch list"))?;
    let n = first.data().len();
    let mut mean = vec![0.0; n];
    for p in patches {
        if p.data().len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: p.data().len(),
            });
        }
        for (m, v) in mean.iter_mut().zip(p.data()) {
            *m += v;
        }
    }
    let t = patches.len() as f64;
    mean.iter_mut().for_each(|m| *m /= t);
    let total: f64 = patches
        .iter()
        .map(|p| {
            p.data()
                .iter()
                .zip(&mean)
                .map(|(v, m)| (v - m) * (v - m))
                .sum::<f64>()
        })
        .sum();
    Ok(total / t)
}

/// Excitation of `patches` relative to `full_track_variance`, the raw value
/// attained by the whole track; clamped to `[0, 1]`.
pub fn excitation_score(patches: &[GrayImage], full_track_variance: f64) -> Result<f64> {
    let raw = raw_excitation(patches)?;
    if full_track_variance <= 0.0 {
        return Ok(0.0);
    }
    Ok((raw / full_track_variance).clamp(0.0, 1.0))
}
