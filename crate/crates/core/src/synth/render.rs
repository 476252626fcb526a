use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::camera::{PinholeCamera, Pose};
use super::scene::SceneModel;
use crate::error::{Error, Result};
use crate::imgproc::{Contrast, GrayImage};

/// Per-pixel camera depth (z along the optical axis); `INFINITY` where the
/// ray misses the scene.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthMap {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl DepthMap {
    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Depth at a continuous location. Inverse depth is interpolated
    /// bilinearly (exact for planes) when all four neighbors are finite;
    /// otherwise the nearest pixel is used.
    pub fn sample(&self, u: f64, v: f64) -> f64 {
        let uc = u.clamp(0.0, (self.width - 1) as f64);
        let vc = v.clamp(0.0, (self.height - 1) as f64);
        let (x0, y0) = (uc.floor() as usize, vc.floor() as usize);
        let (x1, y1) = ((x0 + 1).min(self.width - 1), (y0 + 1).min(self.height - 1));
        let (fx, fy) = (uc - x0 as f64, vc - y0 as f64);
        let corners = [self.get(x0, y0), self.get(x1, y0), self.get(x0, y1), self.get(x1, y1)];
        if corners.iter().all(|d| d.is_finite()) {
            let inv = |d: f64| 1.0 / d;
            let top = inv(corners[0]) * (1.0 - fx) + inv(corners[1]) * fx;
            let bottom = inv(corners[2]) * (1.0 - fx) + inv(corners[3]) * fx;
            1.0 / (top * (1.0 - fy) + bottom * fy)
        } else {
            self.get(uc.round() as usize, vc.round() as usize)
        }
    }
}

#[derive(Clone, Debug)]
pub struct RenderedFrame {
    pub image: GrayImage,
    pub depth: DepthMap,
    pub camera: PinholeCamera,
    /// Camera-to-world pose.
    pub pose: Pose,
    pub contrast: Contrast,
    pub noise_sigma: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RenderSettings {
    pub contrast: Contrast,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for RenderSettings {
    fn default() -> Self {
        Self {
            contrast: Contrast::identity(),
            noise_sigma: 0.0,
            seed: 0,
        }
    }
}

/// Ray-casts the scene through every pixel center.
///
/// Intensity is `kappa(rho(hit)) + noise`, clipped to `[0, 1]`.
pub fn render_view(
    scene: &SceneModel,
    cam: &PinholeCamera,
    pose: &Pose,
    settings: &RenderSettings,
) -> Result<RenderedFrame> {
    cam.validate()?;
    let (w, h) = (cam.width, cam.height);
    // camera center and ray rotation in the object frame
    let origin = scene.placement.to_local(&pose.translation);
    let rot = scene.placement.rotation.transpose() * pose.rotation;
    let mut intensity = vec![scene.background; w * h];
    let mut depth = vec![f64::INFINITY; w * h];
    let mut hits = 0usize;
    for y in 0..h {
        for x in 0..w {
            let d_cam = cam.ray(x as f64, y as f64);
            let d_obj = rot * d_cam;
            if let Some(hit) = scene.intersect(&origin, &d_obj) {
                // d_cam has unit z, so the ray parameter is the camera depth
                depth[y * w + x] = hit.t;
                intensity[y * w + x] = settings.contrast.map(scene.radiance(hit.point.x, hit.point.y));
                hits += 1;
            }
        }
    }
    if 2 * hits < w * h {
        return Err(Error::SceneBehindCamera);
    }
    if settings.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, settings.noise_sigma)
            .map_err(|e| Error::InvalidParam(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
        for v in intensity.iter_mut() {
            *v += normal.sample(&mut rng);
        }
    }
    for v in intensity.iter_mut() {
        *v = v.clamp(0.0, 1.0);
    }
    Ok(RenderedFrame {
        image: GrayImage::new(w, h, intensity)?,
        depth: DepthMap {
            width: w,
            height: h,
            data: depth,
        },
        camera: *cam,
        pose: *pose,
        contrast: settings.contrast.clone(),
        noise_sigma: settings.noise_sigma,
    })
}

/// Outcome of transferring a pixel from one frame to another.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Correspondence {
    Visible(f64, f64),
    Occluded,
    OutOfView,
}

/// Relative depth excess beyond which a transferred point counts as hidden.
pub const OCCLUSION_TOLERANCE: f64 = 0.01;

/// World point seen at `(u, v)` in `frame`.
pub fn back_project(frame: &RenderedFrame, u: f64, v: f64) -> Result<Vector3<f64>> {
    let z = frame.depth.sample(u, v);
    if !z.is_finite() {
        return Err(Error::NoDepth);
    }
    Ok(frame.pose.to_world(&frame.camera.back_project(u, v, z)))
}

/// Where `world` lands in `frame`, with the covisibility verdict.
pub fn transfer_point(frame: &RenderedFrame, world: &Vector3<f64>) -> Correspondence {
    let local = frame.pose.to_local(world);
    if local.z <= 0.0 {
        return Correspondence::OutOfView;
    }
    let (u, v) = frame.camera.project(&local);
    if !frame.camera.contains(u, v) {
        return Correspondence::OutOfView;
    }
    let seen = frame.depth.sample(u, v);
    if !seen.is_finite() || local.z > seen * (1.0 + OCCLUSION_TOLERANCE) {
        return Correspondence::Occluded;
    }
    Correspondence::Visible(u, v)
}

/// Maps pixel `(u, v)` of `a` into `b` through `a`'s depth map.
pub fn ground_truth_correspondence(
    a: &RenderedFrame,
    b: &RenderedFrame,
    u: f64,
    v: f64,
) -> Result<Correspondence> {
    let world = back_project(a, u, v)?;
    Ok(transfer_point(b, &world))
}
