//! Viewpoint synthesis from a local surface and the descriptor marginalized
//! over the synthesized views, plus max-out matching over stored views.

use std::f64::consts::{FRAC_PI_3, FRAC_PI_6, TAU};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hog::{normalize_dog, patch_density, sample_descriptor, DescriptorParams, DescriptorTag, DescriptorVector, OrientationDensity};
use crate::imgproc::{to_base, GrayImage};
use crate::synth::{axis_angle, PinholeCamera, RenderedFrame};

/// Surface facing threshold: `-(R n) . z` must exceed this for a view to be kept.
pub const DEFAULT_VISIBILITY: f64 = 0.2;

/// Largest allowed excursion of the reprojected lattice outside the source
/// image, as a fraction of the image size.
pub const OUT_OF_VIEW_MARGIN: f64 = 0.2;

/// Back-projected patch lattice, in the camera frame of the source view.
#[derive(Clone, Debug)]
pub struct LocalSurface {
    /// Lattice side (the patch size).
    pub size: usize,
    /// Lattice center in the source level's pixel coordinates.
    pub center: (f64, f64),
    /// Camera depth at each lattice point, row-major.
    pub depths: Vec<f64>,
    pub points: Vec<Vector3<f64>>,
    /// Unit normals, oriented toward the camera.
    pub normals: Vec<Vector3<f64>>,
    /// The tracked point, pivot of every synthesized rotation.
    pub anchor: Vector3<f64>,
    /// Intrinsics of the pyramid level the lattice lives on.
    pub camera: PinholeCamera,
}

impl LocalSurface {
    /// Builds the lattice around `center` (level-`level` pixel coordinates)
    /// using the frame's base-resolution depth map.
    pub fn from_frame(frame: &RenderedFrame, level: usize, center: (f64, f64), size: usize) -> Result<Self> {
        let camera = frame.camera.at_level(level);
        let r = (size as f64 - 1.0) / 2.0;
        let mut depths = Vec::with_capacity(size * size);
        let mut points = Vec::with_capacity(size * size);
        for i in 0..size {
            for j in 0..size {
                let u = center.0 + j as f64 - r;
                let v = center.1 + i as f64 - r;
                let z = frame.depth.sample(to_base(u, level), to_base(v, level));
                if !z.is_finite() || z <= 0.0 {
                    return Err(Error::NoDepth);
                }
                depths.push(z);
                points.push(camera.back_project(u, v, z));
            }
        }
        let z = frame
            .depth
            .sample(to_base(center.0, level), to_base(center.1, level));
        if !z.is_finite() {
            return Err(Error::NoDepth);
        }
        let anchor = camera.back_project(center.0, center.1, z);
        Self::from_points(size, center, depths, points, anchor, camera)
    }

    /// Assembles a surface from lattice points; normals come from finite
    /// differences across the lattice.
    pub fn from_points(
        size: usize,
        center: (f64, f64),
        depths: Vec<f64>,
        points: Vec<Vector3<f64>>,
        anchor: Vector3<f64>,
        camera: PinholeCamera,
    ) -> Result<Self> {
        if size < 2 || points.len() != size * size || depths.len() != size * size {
            return Err(Error::DimensionMismatch {
                expected: size * size,
                actual: points.len(),
            });
        }
        let at = |i: usize, j: usize| points[i * size + j];
        let mut normals = Vec::with_capacity(size * size);
        for i in 0..size {
            for j in 0..size {
                let (jl, jr) = (j.saturating_sub(1), (j + 1).min(size - 1));
                let (iu, id) = (i.saturating_sub(1), (i + 1).min(size - 1));
                let du = at(i, jr) - at(i, jl);
                let dv = at(id, j) - at(iu, j);
                let mut n = du.cross(&dv);
                let len = n.norm();
                if !(len > 0.0) {
                    return Err(Error::InvalidParam("degenerate surface lattice".into()));
                }
                n /= len;
                if n.dot(&at(i, j)) > 0.0 {
                    n = -n;
                }
                normals.push(n);
            }
        }
        Ok(Self {
            size,
            center,
            depths,
            points,
            normals,
            anchor,
            camera,
        })
    }

    pub fn mean_normal(&self) -> Vector3<f64> {
        let s: Vector3<f64> = self.normals.iter().sum();
        s.normalize()
    }
}

/// Rotations sampled over a viewing hemisphere, uniformly weighted.
#[derive(Clone, Debug)]
pub struct ViewpointSet {
    pub rotations: Vec<Matrix3<f64>>,
    /// `(tilt axis azimuth, tilt, in-plane angle)` of each rotation.
    pub params: Vec<[f64; 3]>,
}

impl ViewpointSet {
    pub fn identity() -> Self {
        Self {
            rotations: vec![Matrix3::identity()],
            params: vec![[0.0; 3]],
        }
    }

    pub fn len(&self) -> usize {
        self.rotations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rotations.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HemisphereSampling {
    /// Tilt axes per tilted ring, evenly spaced in the image plane.
    pub azimuths: usize,
    /// Tilt rings including the untilted one; ring `k` tilts by
    /// `max_tilt * k / (tilts - 1)`.
    pub tilts: usize,
    pub max_tilt: f64,
    pub inplane: usize,
    /// In-plane angles are spaced evenly over `[-inplane_range, inplane_range)`
    /// and always include zero.
    pub inplane_range: f64,
}

impl Default for HemisphereSampling {
    /// 8 viewing directions (frontal plus 7 tilted) times 10 in-plane angles
    /// spanning `[-pi/3, pi/3)`: 80 rotations.
    fn default() -> Self {
        Self {
            azimuths: 7,
            tilts: 2,
            max_tilt: FRAC_PI_6,
            inplane: 10,
            inplane_range: FRAC_PI_3,
        }
    }
}

/// Deterministic rotation set `R = R_tilt(axis, tilt) * R_z(psi)`; exact
/// duplicates are dropped, and the identity is always the first element.
pub fn sample_hemisphere(s: &HemisphereSampling) -> Result<ViewpointSet> {
    if s.azimuths == 0 || s.tilts == 0 || s.inplane == 0 {
        return Err(Error::InvalidParam("hemisphere sample counts must be >= 1".into()));
    }
    let step = 2.0 * s.inplane_range / s.inplane as f64;
    let half = (s.inplane / 2) as i64;
    let mut inplane: Vec<f64> = (0..s.inplane as i64).map(|k| (k - half) as f64 * step).collect();
    // zero first so the identity leads the set
    inplane.sort_by(|a, b| a.abs().total_cmp(&b.abs()).then(a.total_cmp(b)));

    let mut directions = vec![(0.0, 0.0)];
    for ring in 1..s.tilts {
        let tilt = s.max_tilt * ring as f64 / (s.tilts - 1) as f64;
        for a in 0..s.azimuths {
            directions.push((TAU * a as f64 / s.azimuths as f64, tilt));
        }
    }

    let mut set = ViewpointSet {
        rotations: Vec::new(),
        params: Vec::new(),
    };
    for &(azimuth, tilt) in &directions {
        let tilt_r = if tilt == 0.0 {
            Matrix3::identity()
        } else {
            axis_angle(Vector3::new(azimuth.cos(), azimuth.sin(), 0.0), tilt)
        };
        for &psi in &inplane {
            let r = tilt_r * axis_angle(Vector3::z(), psi);
            let r = if tilt == 0.0 && psi == 0.0 { Matrix3::identity() } else { r };
            if set.rotations.iter().any(|q| (q - r).abs().max() < 1e-12) {
                continue;
            }
            set.rotations.push(r);
            set.params.push([azimuth, tilt, psi]);
        }
    }
    Ok(set)
}

#[derive(Clone, Debug)]
pub struct SynthesizedPatch {
    pub image: GrayImage,
    pub rotation: Matrix3<f64>,
    /// Facing score `-(R n) . z` of the rotated mean normal.
    pub facing: f64,
    pub accepted: bool,
}

/// Rotates the surface lattice about its anchor, projects it back into the
/// source view and samples `source` (the level image the surface was built
/// on) bilinearly, clamping at the border.
pub fn synthesize_patch(
    source: &GrayImage,
    surface: &LocalSurface,
    rotation: &Matrix3<f64>,
    visibility: f64,
) -> Result<SynthesizedPatch> {
    let cam = &surface.camera;
    let (w, h) = (source.width() as f64, source.height() as f64);
    let (mx, my) = (OUT_OF_VIEW_MARGIN * w, OUT_OF_VIEW_MARGIN * h);
    let mut data = Vec::with_capacity(surface.points.len());
    for p in &surface.points {
        let q = rotation * (p - surface.anchor) + surface.anchor;
        if q.z <= 0.0 {
            return Err(Error::SynthesisOutOfView);
        }
        let (u, v) = cam.project(&q);
        if u < -mx || v < -my || u > w - 1.0 + mx || v > h - 1.0 + my {
            return Err(Error::SynthesisOutOfView);
        }
        data.push(source.sample_bilinear(u, v));
    }
    let facing = -(rotation * surface.mean_normal()).z;
    Ok(SynthesizedPatch {
        image: GrayImage::new(surface.size, surface.size, data)?,
        rotation: *rotation,
        facing,
        accepted: facing > visibility,
    })
}

/// Uniform average of the per-view densities, normalized per cell.
pub fn compute_rhog(patches: &[GrayImage], params: &DescriptorParams) -> Result<DescriptorVector> {
    if patches.is_empty() {
        return Err(Error::AllViewsRejected);
    }
    let mut sum = OrientationDensity::zeros(params.cells, params.bins);
    for p in patches {
        sum.add_assign(&patch_density(p, params)?);
    }
    rhog_from_sum(&sum, patches.len())
}

/// Marginalized descriptor from an already accumulated density sum.
pub fn rhog_from_sum(sum: &OrientationDensity, views: usize) -> Result<DescriptorVector> {
    if views == 0 {
        return Err(Error::AllViewsRejected);
    }
    let mean = sum.scaled(1.0 / views as f64);
    Ok(sample_descriptor(&normalize_dog(&mean), DescriptorTag::R))
}

/// Accepted views only; errors when every view was rejected.
pub fn compute_rhog_from_views(views: &[SynthesizedPatch], params: &DescriptorParams) -> Result<DescriptorVector> {
    let accepted: Vec<GrayImage> = views
        .iter()
        .filter(|v| v.accepted)
        .map(|v| v.image.clone())
        .collect();
    compute_rhog(&accepted, params)
}

pub fn squared_l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Smallest squared l2 residual between `test` and any stored view, with
/// the index achieving it (lowest index on ties).
pub fn maxout_match(test: &DescriptorVector, stored: &[DescriptorVector]) -> Result<(f64, usize)> {
    if stored.is_empty() {
        return Err(Error::Empty("max-out store"));
    }
    let mut best = (f64::INFINITY, 0);
    for (i, s) in stored.iter().enumerate() {
        if s.len() != test.len() {
            return Err(Error::DimensionMismatch {
                expected: test.len(),
                actual: s.len(),
            });
        }
        let d = squared_l2(&test.values, &s.values);
        if d < best.0 {
            best = (d, i);
        }
    }
    Ok(best)
}
