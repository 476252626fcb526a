use nalgebra::{Matrix3, Rotation3, Unit, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgproc::{to_base, to_level};

/// Rigid frame `(R, T)` mapping local coordinates into the world:
/// `X_world = R X_local + T`. For cameras the local frame has x right,
/// y down and z along the optical axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "PoseRepr", try_from = "PoseRepr")]
pub struct Pose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

#[derive(Serialize, Deserialize)]
struct PoseRepr {
    rotation: [[f64; 3]; 3],
    translation: [f64; 3],
}

impl From<Pose> for PoseRepr {
    fn from(p: Pose) -> Self {
        let r = &p.rotation;
        PoseRepr {
            rotation: [
                [r[(0, 0)], r[(0, 1)], r[(0, 2)]],
                [r[(1, 0)], r[(1, 1)], r[(1, 2)]],
                [r[(2, 0)], r[(2, 1)], r[(2, 2)]],
            ],
            translation: [p.translation.x, p.translation.y, p.translation.z],
        }
    }
}

impl TryFrom<PoseRepr> for Pose {
    type Error = Error;

    fn try_from(r: PoseRepr) -> Result<Self> {
        let m = Matrix3::from_fn(|i, j| r.rotation[i][j]);
        Pose::new(m, Vector3::from(r.translation))
    }
}

/// Checks `R^T R = I` to `tol` and `det R = 1`.
pub fn is_rotation(r: &Matrix3<f64>, tol: f64) -> bool {
    let e = r.transpose() * r - Matrix3::identity();
    e.iter().all(|v| v.abs() <= tol) && (r.determinant() - 1.0).abs() <= tol
}

impl Pose {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        if !is_rotation(&rotation, 1e-9) || !translation.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidParam("pose rotation is not in SO(3)".into()));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Camera at `eye` looking at `target`, with `up` pointing up in the
    /// image, then rolled by `roll` radians about the optical axis.
    pub fn look_at(eye: Vector3<f64>, target: Vector3<f64>, up: Vector3<f64>, roll: f64) -> Self {
        let z = (target - eye).normalize();
        let down = -(up - z * up.dot(&z));
        let y = down.normalize();
        let x = y.cross(&z);
        let base = Matrix3::from_columns(&[x, y, z]);
        let r = base * *Rotation3::from_axis_angle(&Vector3::z_axis(), roll).matrix();
        Self {
            rotation: r,
            translation: eye,
        }
    }

    pub fn to_world(&self, local: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * local + self.translation
    }

    pub fn to_local(&self, world: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.transpose() * (world - self.translation)
    }

    /// Geodesic angle between the orientations of two poses, in radians.
    pub fn rotation_angle_to(&self, other: &Pose) -> f64 {
        let rel = self.rotation.transpose() * other.rotation;
        ((rel.trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos()
    }
}

/// Rotation by `angle` about `axis` (need not be unit length).
pub fn axis_angle(axis: Vector3<f64>, angle: f64) -> Matrix3<f64> {
    *Rotation3::from_axis_angle(&Unit::new_normalize(axis), angle).matrix()
}

/// Pinhole camera with square pixels; pixel centers at integer coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PinholeCamera {
    pub focal: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl PinholeCamera {
    pub fn new(focal: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        let cam = Self {
            focal,
            cx,
            cy,
            width,
            height,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.focal > 0.0)
            || !(0.0..self.width as f64).contains(&self.cx)
            || !(0.0..self.height as f64).contains(&self.cy)
        {
            return Err(Error::InvalidParam("camera intrinsics out of range".into()));
        }
        Ok(())
    }

    /// `pi(X) = X / X_3` followed by the intrinsics.
    pub fn project(&self, x: &Vector3<f64>) -> (f64, f64) {
        (
            self.focal * x.x / x.z + self.cx,
            self.focal * x.y / x.z + self.cy,
        )
    }

    /// Ray direction through pixel `(u, v)`, scaled so its z component is 1.
    pub fn ray(&self, u: f64, v: f64) -> Vector3<f64> {
        Vector3::new((u - self.cx) / self.focal, (v - self.cy) / self.focal, 1.0)
    }

    /// Point at camera depth `z` (along the optical axis) seen at `(u, v)`.
    pub fn back_project(&self, u: f64, v: f64, z: f64) -> Vector3<f64> {
        self.ray(u, v) * z
    }

    pub fn contains(&self, u: f64, v: f64) -> bool {
        u >= -0.5 && v >= -0.5 && u < self.width as f64 - 0.5 && v < self.height as f64 - 0.5
    }

    /// Intrinsics of pyramid level `level`.
    pub fn at_level(&self, level: usize) -> PinholeCamera {
        let s = (1u64 << level) as f64;
        let mut w = self.width;
        let mut h = self.height;
        for _ in 0..level {
            w = w.div_ceil(2);
            h = h.div_ceil(2);
        }
        PinholeCamera {
            focal: self.focal / s,
            cx: to_level(self.cx, level),
            cy: to_level(self.cy, level),
            width: w,
            height: h,
        }
    }
}

/// Base-resolution coordinates of a level-`level` pixel position.
pub fn level_to_base(u: f64, v: f64, level: usize) -> (f64, f64) {
    (to_base(u, level), to_base(v, level))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn look_at_points_optical_axis_at_target() {
        let eye = Vector3::new(1.0, -2.0, 3.0);
        let p = Pose::look_at(eye, Vector3::zeros(), Vector3::z(), 0.3);
        assert!(is_rotation(&p.rotation, 1e-12));
        let local = p.to_local(&Vector3::zeros());
        assert!(local.x.abs() < 1e-12 && local.y.abs() < 1e-12 && local.z > 0.0);
        let back = p.to_world(&local);
        assert!(back.norm() < 1e-12);
    }

    #[test]
    fn up_vector_projects_upward() {
        let p = Pose::look_at(Vector3::new(0.0, -3.0, 0.0), Vector3::zeros(), Vector3::z(), 0.0);
        let above = p.to_local(&Vector3::new(0.0, 0.0, 1.0));
        assert!(above.y < 0.0, "world up should map to image up (negative y)");
    }

    #[test]
    fn projection_round_trip() {
        let cam = PinholeCamera::new(200.0, 95.5, 71.5, 192, 144).unwrap();
        let x = cam.back_project(10.25, 99.0, 2.5);
        let (u, v) = cam.project(&x);
        assert!((u - 10.25).abs() < 1e-12 && (v - 99.0).abs() < 1e-12);
        assert!((x.z - 2.5).abs() < 1e-15);
    }

    #[test]
    fn level_camera_agrees_with_level_coordinates() {
        let cam = PinholeCamera::new(200.0, 96.0, 72.0, 192, 144).unwrap();
        let x = Vector3::new(0.3, -0.2, 2.0);
        let (u, v) = cam.project(&x);
        for l in 0..4 {
            let (ul, vl) = cam.at_level(l).project(&x);
            assert!((ul - to_level(u, l)).abs() < 1e-12);
            assert!((vl - to_level(v, l)).abs() < 1e-12);
        }
        assert_eq!(cam.at_level(2).width, 48);
    }

    #[test]
    fn rejects_non_rotations() {
        let mut m = Matrix3::identity();
        m[(0, 0)] = -1.0;
        assert!(Pose::new(m, Vector3::zeros()).is_err());
        let json = serde_json::to_string(&Pose::identity()).unwrap();
        let back: Pose = serde_json::from_str(&json).unwrap();
        assert_eq!(back, Pose::identity());
    }

    #[test]
    fn rotation_angle() {
        let a = Pose::identity();
        let b = Pose::new(axis_angle(Vector3::new(1.0, 1.0, 0.0), 0.4), Vector3::zeros()).unwrap();
        assert!((a.rotation_angle_to(&b) - 0.4).abs() < 1e-12);
    }
}
