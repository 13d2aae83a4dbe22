use serde::{Deserialize, Serialize};

use super::math::{linear_part, rigid, translation_part, Mat3, Mat4, Vec3};
use crate::error::{Error, Result};

/// Pinhole camera. Camera space follows the computer-vision convention:
/// +x right, +y down, +z forward; pixel `(i, j)` samples the ray through
/// `(i + 0.5, j + 0.5)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    /// Row-major 4x4 world-to-camera transform.
    #[serde(with = "mat4_rows")]
    pub world_to_camera: Mat4,
    pub near: f64,
    pub far: f64,
}

impl Camera {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: usize,
        height: usize,
        world_to_camera: Mat4,
    ) -> Result<Self> {
        let cam = Camera {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
            world_to_camera,
            near: 0.01,
            far: 100.0,
        };
        cam.validate()?;
        Ok(cam)
    }

    /// Camera at `eye` looking at `target`; `up` is the world up direction.
    pub fn look_at(
        eye: Vec3,
        target: Vec3,
        up: Vec3,
        fov_x_deg: f64,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        let forward = (target - eye).normalize();
        let right = forward.cross(&up).normalize();
        let down = forward.cross(&right);
        let r = Mat3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        let t = -(r * eye);
        let fx = width as f64 / (2.0 * (fov_x_deg.to_radians() / 2.0).tan());
        Camera::new(
            fx,
            fx,
            width as f64 / 2.0,
            height as f64 / 2.0,
            width,
            height,
            rigid(&r, &t),
        )
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::Input(format!(
                "focal lengths must be positive (fx={}, fy={})",
                self.fx, self.fy
            )));
        }
        if !(self.near > 0.0 && self.near < self.far) {
            return Err(Error::Input(format!(
                "clip planes must satisfy 0 < near < far (near={}, far={})",
                self.near, self.far
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::Input("image size must be nonzero".into()));
        }
        let r = self.rotation();
        if super::math::orthonormality_error(&r) > 1e-6 {
            return Err(Error::Input("world-to-camera rotation is not orthonormal".into()));
        }
        Ok(())
    }

    pub fn rotation(&self) -> Mat3 {
        linear_part(&self.world_to_camera)
    }

    pub fn translation(&self) -> Vec3 {
        translation_part(&self.world_to_camera)
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vec3 {
        -(self.rotation().transpose() * self.translation())
    }

    pub fn intrinsics(&self) -> Mat3 {
        Mat3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    pub fn world_to_cam(&self, p: &Vec3) -> Vec3 {
        self.rotation() * p + self.translation()
    }

    /// Pixel coordinates of a camera-space point (continuous, pixel centers at +0.5).
    pub fn project_cam(&self, p: &Vec3) -> (f64, f64) {
        (self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy)
    }

    /// Camera-space direction (with z = 1) of the ray through continuous pixel `(x, y)`.
    pub fn ray_dir(&self, x: f64, y: f64) -> Vec3 {
        Vec3::new((x - self.cx) / self.fx, (y - self.cy) / self.fy, 1.0)
    }

    /// Camera-space point at depth `z` on the ray through the center of pixel `(i, j)`.
    pub fn backproject(&self, i: usize, j: usize, z: f64) -> Vec3 {
        self.ray_dir(i as f64 + 0.5, j as f64 + 0.5) * z
    }
}

mod mat4_rows {
    use super::Mat4;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &Mat4, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<[f64; 4]> = (0..4)
            .map(|r| [m[(r, 0)], m[(r, 1)], m[(r, 2)], m[(r, 3)]])
            .collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Mat4, D::Error> {
        let rows: [[f64; 4]; 4] = Deserialize::deserialize(d)?;
        Ok(Mat4::from_fn(|r, c| rows[r][c]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn look_at_puts_target_on_optical_axis() {
        let cam = Camera::look_at(
            Vec3::new(3.0, 1.0, -2.0),
            Vec3::new(0.0, 0.2, 0.1),
            Vec3::y(),
            40.0,
            64,
            48,
        )
        .unwrap();
        let p = cam.world_to_cam(&Vec3::new(0.0, 0.2, 0.1));
        assert!(p.x.abs() < 1e-12 && p.y.abs() < 1e-12 && p.z > 0.0);
        assert!((cam.center() - Vec3::new(3.0, 1.0, -2.0)).norm() < 1e-12);
        // world up maps to camera -y
        let up = cam.rotation() * Vec3::y();
        assert!(up.y < 0.0);
    }

    #[test]
    fn rejects_bad_intrinsics() {
        assert!(Camera::new(0.0, 1.0, 0.0, 0.0, 4, 4, Mat4::identity()).is_err());
        let mut cam = Camera::new(1.0, 1.0, 0.0, 0.0, 4, 4, Mat4::identity()).unwrap();
        cam.near = 2.0;
        cam.far = 1.0;
        assert!(cam.validate().is_err());
    }

    #[test]
    fn json_roundtrip() {
        let cam = Camera::look_at(Vec3::new(0.0, 0.0, -3.0), Vec3::zeros(), Vec3::y(), 50.0, 32, 32)
            .unwrap();
        let s = serde_json::to_string(&cam).unwrap();
        let back: Camera = serde_json::from_str(&s).unwrap();
        assert_eq!(cam, back);
    }
}
