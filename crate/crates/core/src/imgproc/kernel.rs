use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape of the angular kernel that spreads a gradient vote over orientation bins.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AngularKernel {
    /// Linear interpolation with cut-off at `eps`.
    #[default]
    Triangular,
    /// Wrapped Gaussian with standard deviation `eps`, peak-normalized.
    WrappedGaussian,
}

/// Angular width `eps` and spatial width `sigma` of the density kernels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub eps: f64,
    pub sigma: f64,
}

impl KernelParams {
    /// Checks `0 < eps < pi` and `0 < sigma < sqrt(area)`.
    pub fn validate(&self, patch_area: f64) -> Result<()> {
        if !(self.eps > 0.0 && self.eps < PI) {
            return Err(Error::InvalidParam(format!("eps {} not in (0, pi)", self.eps)));
        }
        if !(self.sigma > 0.0 && self.sigma < patch_area.sqrt()) {
            return Err(Error::InvalidParam(format!(
                "sigma {} not in (0, sqrt({patch_area}))",
                self.sigma
            )));
        }
        Ok(())
    }
}

/// Distance on the circle, in `[0, pi]`.
pub fn circular_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

pub fn angular_kernel(theta: f64, mu: f64, eps: f64, kind: AngularKernel) -> f64 {
    let d = circular_distance(theta, mu);
    match kind {
        AngularKernel::Triangular => (1.0 - d / eps).max(0.0),
        AngularKernel::WrappedGaussian => wrapped_gaussian(d, eps) / wrapped_gaussian(0.0, eps),
    }
}

fn wrapped_gaussian(d: f64, eps: f64) -> f64 {
    let inv = 1.0 / (2.0 * eps * eps);
    (-4..=4)
        .map(|k| {
            let t = d + TAU * f64::from(k);
            (-t * t * inv).exp()
        })
        .sum()
}
