//! Analytic airway phantoms used for tests, examples and the demo pipeline.

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::GeometryError;
use crate::geometry::{Aabb, GridSpec, VoxelMask};

/// Straight tube whose axis runs along +z from `z = 0` to `z = length`,
/// closed by hemispherical ends so the medial axis is exactly that segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CylinderPhantom {
    pub radius: f64,
    pub length: f64,
}

impl Default for CylinderPhantom {
    fn default() -> Self {
        Self {
            radius: 4e-3,
            length: 40e-3,
        }
    }
}

/// One trunk splitting into two symmetric child branches in the xz-plane.
/// Each segment is a capsule; the lumen is their union.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct YPhantom {
    pub trunk_radius: f64,
    pub trunk_length: f64,
    pub branch_radius: f64,
    pub branch_length: f64,
    /// Angle between each child and the trunk axis, radians.
    pub branch_angle: f64,
}

impl Default for YPhantom {
    fn default() -> Self {
        Self {
            trunk_radius: 5e-3,
            trunk_length: 30e-3,
            branch_radius: 3.5e-3,
            branch_length: 25e-3,
            branch_angle: 35f64.to_radians(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Phantom {
    Cylinder(CylinderPhantom),
    Y(YPhantom),
}

fn capsule(p: &Point3<f64>, a: &Point3<f64>, b: &Point3<f64>, r: f64) -> f64 {
    let ab = b - a;
    let t = ((p - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm() - r
}

impl CylinderPhantom {
    pub fn signed_distance(&self, p: &Point3<f64>) -> f64 {
        capsule(p, &Point3::origin(), &Point3::new(0.0, 0.0, self.length), self.radius)
    }

    /// Distance from `p` to the tube axis segment.
    pub fn axis_distance(&self, p: &Point3<f64>) -> f64 {
        capsule(p, &Point3::origin(), &Point3::new(0.0, 0.0, self.length), 0.0)
    }

    pub fn bounds(&self) -> Aabb {
        Aabb {
            min: Point3::new(-self.radius, -self.radius, -self.radius),
            max: Point3::new(self.radius, self.radius, self.length + self.radius),
        }
    }
}

impl YPhantom {
    pub fn junction(&self) -> Point3<f64> {
        Point3::new(0.0, 0.0, self.trunk_length)
    }

    pub fn branch_direction(&self, side: usize) -> Vector3<f64> {
        let s = if side == 0 { -1.0 } else { 1.0 };
        Vector3::new(s * self.branch_angle.sin(), 0.0, self.branch_angle.cos())
    }

    /// Trunk start, then the two branch tips.
    pub fn endpoints(&self) -> [Point3<f64>; 3] {
        let j = self.junction();
        [
            Point3::origin(),
            j + self.branch_direction(0) * self.branch_length,
            j + self.branch_direction(1) * self.branch_length,
        ]
    }

    pub fn signed_distance(&self, p: &Point3<f64>) -> f64 {
        let [root, left, right] = self.endpoints();
        let j = self.junction();
        capsule(p, &root, &j, self.trunk_radius)
            .min(capsule(p, &j, &left, self.branch_radius))
            .min(capsule(p, &j, &right, self.branch_radius))
    }

    /// Distance from `p` to the union of the three axis segments.
    pub fn axis_distance(&self, p: &Point3<f64>) -> f64 {
        let [root, left, right] = self.endpoints();
        let j = self.junction();
        capsule(p, &root, &j, 0.0)
            .min(capsule(p, &j, &left, 0.0))
            .min(capsule(p, &j, &right, 0.0))
    }

    pub fn bounds(&self) -> Aabb {
        let mut b = Aabb::empty();
        for (c, r) in self.endpoints().iter().zip([self.trunk_radius, self.branch_radius, self.branch_radius]) {
            b.grow(&(c - Vector3::repeat(r)));
            b.grow(&(c + Vector3::repeat(r)));
        }
        b.grow(&(self.junction() - Vector3::repeat(self.trunk_radius)));
        b.grow(&(self.junction() + Vector3::repeat(self.trunk_radius)));
        b
    }
}

impl Phantom {
    pub fn signed_distance(&self, p: &Point3<f64>) -> f64 {
        match self {
            Phantom::Cylinder(c) => c.signed_distance(p),
            Phantom::Y(y) => y.signed_distance(p),
        }
    }

    pub fn axis_distance(&self, p: &Point3<f64>) -> f64 {
        match self {
            Phantom::Cylinder(c) => c.axis_distance(p),
            Phantom::Y(y) => y.axis_distance(p),
        }
    }

    pub fn bounds(&self) -> Aabb {
        match self {
            Phantom::Cylinder(c) => c.bounds(),
            Phantom::Y(y) => y.bounds(),
        }
    }

    /// Voxelizes the lumen with `padding` empty voxels around it.
    pub fn mask(&self, voxel_size: f64, padding: usize) -> Result<VoxelMask, GeometryError> {
        let b = self.bounds();
        let pad = (padding as f64 + 0.5) * voxel_size;
        let ext = b.extent() + Vector3::repeat(2.0 * pad);
        let dims = [0, 1, 2].map(|a| (ext[a] / voxel_size).ceil() as usize + 1);
        let origin = b.min - Vector3::repeat(pad);
        let grid = GridSpec::new(dims, [voxel_size; 3], origin.coords.into())?;
        VoxelMask::from_fn(grid, |p| self.signed_distance(&p) < 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cylinder_distance_signs() {
        let c = CylinderPhantom::default();
        assert!((c.signed_distance(&Point3::new(0.0, 0.0, 0.02)) + 4e-3).abs() < 1e-15);
        assert!((c.signed_distance(&Point3::new(5e-3, 0.0, 0.02)) - 1e-3).abs() < 1e-15);
        assert!((c.signed_distance(&Point3::new(0.0, 0.0, -5e-3)) - 1e-3).abs() < 1e-15);
    }

    #[test]
    fn y_phantom_geometry() {
        let y = YPhantom::default();
        assert!(y.signed_distance(&y.junction()) < -y.branch_radius);
        let [_, l, r] = y.endpoints();
        assert!((l.x + r.x).abs() < 1e-15 && l.x < 0.0);
        assert!(y.axis_distance(&l) < 1e-15);
        let m = Phantom::Y(y).mask(1e-3, 1).unwrap();
        assert!(m.count() > 0 && !m.touches_boundary());
    }
}
