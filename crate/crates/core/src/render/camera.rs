//! Pinhole intrinsics. Camera frame: +z forward, +x right, +y down. Pixel
//! `(u, v)` has its center at image coordinates `(u, v)`.

use nalgebra::{Point2, Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::RenderError;

pub const CONVENTION: &str = "z-forward,x-right,y-down";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CameraIntrinsics {
    pub width: usize,
    pub height: usize,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Default for CameraIntrinsics {
    fn default() -> Self {
        Self {
            width: 600,
            height: 600,
            fx: 300.0,
            fy: 300.0,
            cx: 300.0,
            cy: 300.0,
        }
    }
}

impl CameraIntrinsics {
    /// Square image with principal point at the center and the given
    /// horizontal field of view.
    pub fn with_fov(size: usize, fov_deg: f64) -> Self {
        let f = size as f64 / 2.0 / (fov_deg.to_radians() / 2.0).tan();
        Self {
            width: size,
            height: size,
            fx: f,
            fy: f,
            cx: size as f64 / 2.0,
            cy: size as f64 / 2.0,
        }
    }

    pub fn validate(&self) -> Result<(), RenderError> {
        if self.width == 0 || self.height == 0 {
            return Err(RenderError::InvalidCamera("image size must be nonzero".into()));
        }
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(RenderError::InvalidCamera(format!("focal lengths must be positive, got {} {}", self.fx, self.fy)));
        }
        if !(self.cx > 0.0 && self.cx < self.width as f64 && self.cy > 0.0 && self.cy < self.height as f64) {
            return Err(RenderError::InvalidCamera(format!(
                "principal point ({}, {}) outside the {}x{} image",
                self.cx, self.cy, self.width, self.height
            )));
        }
        Ok(())
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    /// Camera-frame direction through image point `(x, y)` with unit z.
    pub fn ray(&self, x: f64, y: f64) -> Vector3<f64> {
        Vector3::new((x - self.cx) / self.fx, (y - self.cy) / self.fy, 1.0)
    }

    pub fn backproject(&self, x: f64, y: f64, depth: f64) -> Point3<f64> {
        Point3::from(self.ray(x, y) * depth)
    }

    /// Image coordinates of a camera-frame point in front of the camera.
    pub fn project(&self, p: &Point3<f64>) -> Option<Point2<f64>> {
        (p.z > 0.0).then(|| Point2::new(self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy))
    }

    /// Whether image coordinates fall within the pixel-center extent.
    pub fn in_image(&self, q: &Point2<f64>) -> bool {
        q.x >= 0.0 && q.y >= 0.0 && q.x <= (self.width - 1) as f64 && q.y <= (self.height - 1) as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid_and_ninety_degrees() {
        let c = CameraIntrinsics::default();
        c.validate().unwrap();
        let edge = c.ray(0.0, c.cy);
        assert!((edge.x.abs().atan().to_degrees() - 45.0).abs() < 1e-12);
        let w = CameraIntrinsics::with_fov(600, 90.0);
        assert!((w.fx - c.fx).abs() < 1e-9 && w.cx == c.cx && w.width == c.width);
    }

    #[test]
    fn bad_principal_point_is_rejected() {
        let c = CameraIntrinsics {
            cx: 600.0,
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn project_inverts_backproject() {
        let c = CameraIntrinsics::default();
        for &(x, y, d) in &[(0.0, 0.0, 0.01), (300.0, 300.0, 0.02), (599.0, 17.5, 0.05)] {
            let q = c.project(&c.backproject(x, y, d)).unwrap();
            assert!((q.x - x).abs() < 1e-9 && (q.y - y).abs() < 1e-9);
        }
        assert_eq!(c.backproject(300.0, 300.0, 0.03), Point3::new(0.0, 0.0, 0.03));
        assert!(c.project(&Point3::new(0.0, 0.0, -1.0)).is_none());
    }
}
