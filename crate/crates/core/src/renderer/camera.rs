use crate::linalg3::Vec3;
use nalgebra::Matrix3;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CameraError {
    #[error("focal lengths must be positive, got fx = {fx}, fy = {fy}")]
    BadFocal { fx: f64, fy: f64 },
    #[error("camera rotation is not orthonormal (error {0:e})")]
    NotOrthonormal(f64),
    #[error("image size must be non-zero")]
    EmptyImage,
    #[error("look-at direction is degenerate")]
    DegenerateLookAt,
}

/// Pinhole camera. The camera frame has x right, y down and z forward;
/// pixel `(i, j)` covers `[i, i + 1) × [j, j + 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    /// World-to-camera rotation.
    pub rotation: Matrix3<f64>,
    /// World-to-camera translation.
    pub translation: Vec3,
}

impl Camera {
    /// Camera at `eye` looking at `target`, principal point at the image center.
    pub fn look_at(
        eye: Vec3,
        target: Vec3,
        up: Vec3,
        focal: f64,
        width: usize,
        height: usize,
    ) -> Result<Self, CameraError> {
        let forward = target - eye;
        let right = forward.cross(&up);
        if forward.norm() == 0.0 || right.norm() < 1e-12 * forward.norm() * up.norm() {
            return Err(CameraError::DegenerateLookAt);
        }
        let z = forward.normalize();
        let x = right.normalize();
        let y = z.cross(&x);
        let rotation = Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
        let cam = Camera {
            fx: focal,
            fy: focal,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
            width,
            height,
            rotation,
            translation: -(rotation * eye),
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<(), CameraError> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(CameraError::BadFocal { fx: self.fx, fy: self.fy });
        }
        if self.width == 0 || self.height == 0 {
            return Err(CameraError::EmptyImage);
        }
        let err = (self.rotation * self.rotation.transpose() - Matrix3::identity()).abs().max();
        if !(err <= 1e-8) {
            return Err(CameraError::NotOrthonormal(err));
        }
        Ok(())
    }

    pub fn world_to_camera(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vec3 {
        -(self.rotation.transpose() * self.translation)
    }

    /// Pixel coordinates of a camera-frame point.
    pub fn project_camera_point(&self, t: &Vec3) -> [f64; 2] {
        [self.fx * t.x / t.z + self.cx, self.fy * t.y / t.z + self.cy]
    }

    /// World-space ray direction (unit) through pixel coordinates `(u, v)`.
    pub fn ray_direction(&self, u: f64, v: f64) -> Vec3 {
        let d = Vec3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0);
        (self.rotation.transpose() * d).normalize()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn look_at_points_forward() {
        let cam = Camera::look_at(Vec3::new(0.0, -5.0, 0.0), Vec3::zeros(), Vec3::z(), 100.0, 64, 48).unwrap();
        let t = cam.world_to_camera(&Vec3::zeros());
        assert!((t - Vec3::new(0.0, 0.0, 5.0)).norm() < 1e-12);
        // World up maps to image up (negative v).
        let up = cam.project_camera_point(&cam.world_to_camera(&Vec3::new(0.0, 0.0, 1.0)));
        assert!(up[1] < cam.cy);
        assert!((cam.center() - Vec3::new(0.0, -5.0, 0.0)).norm() < 1e-12);
        let d = cam.ray_direction(cam.cx, cam.cy);
        assert!((d - Vec3::y()).norm() < 1e-12);
    }

    #[test]
    fn rejects_bad_cameras() {
        assert!(Camera::look_at(Vec3::z(), Vec3::zeros(), Vec3::z(), 100.0, 8, 8).is_err());
        let mut cam = Camera::look_at(Vec3::x() * 3.0, Vec3::zeros(), Vec3::z(), 100.0, 8, 8).unwrap();
        cam.rotation *= 1.1;
        assert!(matches!(cam.validate(), Err(CameraError::NotOrthonormal(_))));
    }
}
