use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::GeometryError;

/// Regular lattice placement shared by masks and distance fields. Node
/// `(i, j, k)` sits at `origin + (i·sx, j·sy, k·sz)`; storage is x-fastest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub origin: [f64; 3],
}

impl GridSpec {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], origin: [f64; 3]) -> Result<Self, GeometryError> {
        let spec = Self { dims, spacing, origin };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if self.dims.iter().any(|&d| d < 2) {
            return Err(GeometryError::InvalidGrid(format!("dims {:?} must be ≥ 2 per axis", self.dims)));
        }
        if self.spacing.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(GeometryError::InvalidGrid(format!("spacing {:?} must be positive", self.spacing)));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    pub fn node(&self, i: usize, j: usize, k: usize) -> Point3<f64> {
        Point3::new(
            self.origin[0] + i as f64 * self.spacing[0],
            self.origin[1] + j as f64 * self.spacing[1],
            self.origin[2] + k as f64 * self.spacing[2],
        )
    }

    pub fn origin_point(&self) -> Point3<f64> {
        Point3::from(self.origin)
    }

    pub fn spacing_vec(&self) -> Vector3<f64> {
        Vector3::from(self.spacing)
    }

    pub fn max_corner(&self) -> Point3<f64> {
        self.node(self.dims[0] - 1, self.dims[1] - 1, self.dims[2] - 1)
    }

    pub fn min_spacing(&self) -> f64 {
        self.spacing.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Length of one cell diagonal.
    pub fn voxel_diagonal(&self) -> f64 {
        self.spacing_vec().norm()
    }

    pub fn contains(&self, p: &Point3<f64>) -> bool {
        let hi = self.max_corner();
        (0..3).all(|a| p[a] >= self.origin[a] && p[a] <= hi[a])
    }
}

/// Binary occupancy volume (lumen = occupied).
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelMask {
    pub grid: GridSpec,
    pub occupancy: Vec<bool>,
}

impl VoxelMask {
    pub fn new(grid: GridSpec, occupancy: Vec<bool>) -> Result<Self, GeometryError> {
        grid.validate()?;
        if occupancy.len() != grid.len() {
            return Err(GeometryError::InvalidGrid(format!(
                "occupancy has {} entries, grid needs {}",
                occupancy.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, occupancy })
    }

    /// Builds a mask by evaluating `inside` at each voxel center.
    pub fn from_fn(grid: GridSpec, mut inside: impl FnMut(Point3<f64>) -> bool) -> Result<Self, GeometryError> {
        grid.validate()?;
        let mut occupancy = Vec::with_capacity(grid.len());
        for k in 0..grid.dims[2] {
            for j in 0..grid.dims[1] {
                for i in 0..grid.dims[0] {
                    occupancy.push(inside(grid.node(i, j, k)));
                }
            }
        }
        Ok(Self { grid, occupancy })
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> bool {
        self.occupancy[self.grid.index(i, j, k)]
    }

    pub fn count(&self) -> usize {
        self.occupancy.iter().filter(|&&o| o).count()
    }

    /// Writes `<stem>.json` (grid) and `<stem>.raw` (one byte per voxel,
    /// x-fastest, nonzero = lumen).
    pub fn write_raw(&self, stem: &Path) -> Result<(PathBuf, PathBuf), GeometryError> {
        let (header, raw) = (stem.with_extension("json"), stem.with_extension("raw"));
        let text = serde_json::to_string_pretty(&self.grid).expect("grid serializes");
        fs::write(&header, text).map_err(|source| GeometryError::Io {
            path: header.clone(),
            source,
        })?;
        let bytes: Vec<u8> = self.occupancy.iter().map(|&o| o as u8).collect();
        fs::write(&raw, bytes).map_err(|source| GeometryError::Io { path: raw.clone(), source })?;
        Ok((header, raw))
    }

    /// Reads a mask from `<stem>.json` + `<stem>.raw`. `stem` may name either file.
    pub fn read_raw(stem: &Path) -> Result<Self, GeometryError> {
        let (header, raw) = (stem.with_extension("json"), stem.with_extension("raw"));
        let text = fs::read_to_string(&header).map_err(|source| GeometryError::Io {
            path: header.clone(),
            source,
        })?;
        let grid: GridSpec = serde_json::from_str(&text).map_err(|e| GeometryError::Malformed {
            path: header.clone(),
            location: e.line(),
            reason: e.to_string(),
        })?;
        grid.validate()?;
        let bytes = fs::read(&raw).map_err(|source| GeometryError::Io { path: raw.clone(), source })?;
        if bytes.len() != grid.len() {
            return Err(GeometryError::Malformed {
                path: raw,
                location: bytes.len(),
                reason: format!("expected {} voxels", grid.len()),
            });
        }
        Self::new(grid, bytes.iter().map(|&b| b != 0).collect())
    }

    pub fn touches_boundary(&self) -> bool {
        let [nx, ny, nz] = self.grid.dims;
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    let edge = i == 0 || j == 0 || k == 0 || i == nx - 1 || j == ny - 1 || k == nz - 1;
                    if edge && self.get(i, j, k) {
                        return true;
                    }
                }
            }
        }
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_specs() {
        assert!(GridSpec::new([1, 4, 4], [1.0; 3], [0.0; 3]).is_err());
        assert!(GridSpec::new([4, 4, 4], [1.0, 0.0, 1.0], [0.0; 3]).is_err());
        let g = GridSpec::new([2, 3, 4], [0.5; 3], [1.0, 0.0, 0.0]).unwrap();
        assert_eq!(g.len(), 24);
        assert_eq!(g.index(1, 2, 3), 1 + 2 * (2 + 3 * 3));
        assert_eq!(g.node(1, 0, 0), Point3::new(1.5, 0.0, 0.0));
        assert!(VoxelMask::new(g, vec![false; 5]).is_err());
    }

    #[test]
    fn raw_round_trip_and_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let g = GridSpec::new([3, 2, 2], [0.5e-3; 3], [0.0, 1.0, 2.0]).unwrap();
        let m = VoxelMask::from_fn(g, |p| p.x > 0.0).unwrap();
        let stem = dir.path().join("mask");
        let (_, raw) = m.write_raw(&stem).unwrap();
        assert_eq!(VoxelMask::read_raw(&stem.with_extension("raw")).unwrap(), m);
        std::fs::write(&raw, [1u8; 5]).unwrap();
        assert!(matches!(VoxelMask::read_raw(&stem), Err(GeometryError::Malformed { location: 5, .. })));
    }
}
