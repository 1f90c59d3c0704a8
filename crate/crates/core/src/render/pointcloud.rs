use nalgebra::{Isometry3, Point3};
use serde::{Deserialize, Serialize};

use super::camera::CameraIntrinsics;
use super::raster::Raster;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CloudFrame {
    Camera,
    World,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    pub points: Vec<Point3<f64>>,
    pub colors: Vec<[u8; 3]>,
    pub frame: CloudFrame,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Backprojects every `stride`-th pixel with finite depth. With `pose`
/// (world-from-camera) the points are returned in world coordinates.
pub fn backproject_pointcloud(
    depth: &Raster<f64>,
    rgb: Option<&Raster<[u8; 3]>>,
    cam: &CameraIntrinsics,
    pose: Option<&Isometry3<f64>>,
    stride: usize,
) -> PointCloud {
    let stride = stride.max(1);
    let mut points = Vec::new();
    let mut colors = Vec::new();
    for v in (0..depth.height).step_by(stride) {
        for u in (0..depth.width).step_by(stride) {
            let d = *depth.get(u, v);
            if !(d.is_finite() && d > 0.0) {
                continue;
            }
            let p = cam.backproject(u as f64, v as f64, d);
            points.push(pose.map_or(p, |t| t * p));
            colors.push(rgb.map_or([255; 3], |img| *img.get(u, v)));
        }
    }
    PointCloud {
        points,
        colors,
        frame: if pose.is_some() { CloudFrame::World } else { CloudFrame::Camera },
    }
}
