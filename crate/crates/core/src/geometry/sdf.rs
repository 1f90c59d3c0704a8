//! Dense signed distance fields, negative inside the lumen.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};

use log::warn;
use nalgebra::{Point3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bvh::Bvh;
use super::grid::GridSpec;
use super::mesh::TriangleMesh;
use crate::error::GeometryError;

pub const DEFAULT_VOXEL_SIZE: f64 = 0.5e-3;
pub const DEFAULT_PADDING: usize = 3;

static CLAMP_WARNED: AtomicBool = AtomicBool::new(false);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdfOptions {
    pub voxel_size: f64,
    /// Extra voxels beyond the mesh bounds on every side.
    pub padding: usize,
    /// Accept open meshes and store unsigned distances for them.
    pub unsigned_fallback: bool,
}

impl Default for SdfOptions {
    fn default() -> Self {
        Self {
            voxel_size: DEFAULT_VOXEL_SIZE,
            padding: DEFAULT_PADDING,
            unsigned_fallback: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdfGrid {
    pub grid: GridSpec,
    pub values: Vec<f64>,
    /// False when built through the unsigned fallback.
    pub signed: bool,
}

#[derive(Serialize, Deserialize)]
struct DumpHeader {
    dims: [usize; 3],
    spacing: [f64; 3],
    origin: [f64; 3],
    dtype: String,
    signed: bool,
}

/// Builds the field from a mesh. Distances are exact point–triangle
/// distances; the inside is where the generalized winding number is ≥ 0.5.
pub fn build_sdf(mesh: &TriangleMesh, voxel_size: f64, padding: usize) -> Result<SdfGrid, GeometryError> {
    SdfGrid::from_mesh(
        mesh,
        &SdfOptions {
            voxel_size,
            padding,
            unsigned_fallback: false,
        },
    )
}

impl SdfGrid {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self, GeometryError> {
        grid.validate()?;
        if values.len() != grid.len() {
            return Err(GeometryError::InvalidGrid(format!(
                "{} values for {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self {
            grid,
            values,
            signed: true,
        })
    }

    /// Samples an analytic field at every node.
    pub fn from_fn(grid: GridSpec, f: impl Fn(Point3<f64>) -> f64 + Sync) -> Result<Self, GeometryError> {
        grid.validate()?;
        let [nx, ny, _] = grid.dims;
        let values = (0..grid.len())
            .into_par_iter()
            .map(|idx| {
                let (i, j, k) = (idx % nx, (idx / nx) % ny, idx / (nx * ny));
                f(grid.node(i, j, k))
            })
            .collect();
        Ok(Self {
            grid,
            values,
            signed: true,
        })
    }

    pub fn from_mesh(mesh: &TriangleMesh, opts: &SdfOptions) -> Result<Self, GeometryError> {
        if mesh.is_empty() {
            return Err(GeometryError::EmptyMesh);
        }
        if !(opts.voxel_size > 0.0) {
            return Err(GeometryError::InvalidGrid(format!("voxel size {} must be positive", opts.voxel_size)));
        }
        let watertight = mesh.is_watertight();
        if !watertight && !opts.unsigned_fallback {
            return Err(GeometryError::NotWatertight);
        }
        let bvh = Bvh::build(mesh);
        Ok(Self::from_bvh(&bvh, opts.voxel_size, opts.padding, watertight))
    }

    fn from_bvh(bvh: &Bvh, h: f64, padding: usize, signed: bool) -> Self {
        let b = bvh.bounds();
        let pad = padding as f64 * h;
        let lo = b.min - Vector3::repeat(pad);
        let ext = b.max - b.min + Vector3::repeat(2.0 * pad);
        let dims = [0, 1, 2].map(|a| ((ext[a] / h).ceil() as usize + 1).max(2));
        let grid = GridSpec {
            dims,
            spacing: [h; 3],
            origin: lo.coords.into(),
        };
        let [nx, ny, _] = dims;
        let values = (0..grid.len())
            .into_par_iter()
            .map(|idx| {
                let p = grid.node(idx % nx, (idx / nx) % ny, idx / (nx * ny));
                let d = bvh.closest_point(&p).map_or(f64::INFINITY, |c| c.distance);
                if signed && bvh.winding_number(&p) >= 0.5 {
                    -d
                } else {
                    d
                }
            })
            .collect();
        Self { grid, values, signed }
    }

    #[inline]
    pub fn node_value(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.grid.index(i, j, k)]
    }

    /// Clamps `p` into the grid box, warning once per process on the first clamp.
    pub fn clamp_point(&self, p: &Point3<f64>) -> Point3<f64> {
        let lo = self.grid.origin_point();
        let hi = self.grid.max_corner();
        let q = Point3::new(p.x.clamp(lo.x, hi.x), p.y.clamp(lo.y, hi.y), p.z.clamp(lo.z, hi.z));
        if q != *p && !CLAMP_WARNED.swap(true, Ordering::Relaxed) {
            warn!("sdf query at {:?} lies outside the grid and was clamped", p.coords.as_slice());
        }
        q
    }

    /// Trilinear interpolation.
    pub fn sample(&self, p: &Point3<f64>) -> f64 {
        let q = self.clamp_point(p);
        self.sample_unchecked(&q)
    }

    fn sample_unchecked(&self, q: &Point3<f64>) -> f64 {
        let g = &self.grid;
        let mut base = [0usize; 3];
        let mut frac = [0.0; 3];
        for a in 0..3 {
            let mut u = (q[a] - g.origin[a]) / g.spacing[a];
            // Snap round-off so node positions reproduce stored values exactly.
            if (u - u.round()).abs() < 1e-9 {
                u = u.round();
            }
            let i = (u.floor().max(0.0) as usize).min(g.dims[a] - 2);
            base[a] = i;
            frac[a] = (u - i as f64).clamp(0.0, 1.0);
        }
        let [i, j, k] = base;
        let [fx, fy, fz] = frac;
        let v = |di, dj, dk| self.node_value(i + di, j + dj, k + dk);
        let c00 = v(0, 0, 0) * (1.0 - fx) + v(1, 0, 0) * fx;
        let c10 = v(0, 1, 0) * (1.0 - fx) + v(1, 1, 0) * fx;
        let c01 = v(0, 0, 1) * (1.0 - fx) + v(1, 0, 1) * fx;
        let c11 = v(0, 1, 1) * (1.0 - fx) + v(1, 1, 1) * fx;
        let c0 = c00 * (1.0 - fy) + c10 * fy;
        let c1 = c01 * (1.0 - fy) + c11 * fy;
        c0 * (1.0 - fz) + c1 * fz
    }

    /// Central differences with step equal to the spacing, one-sided where the
    /// stencil would leave the grid.
    pub fn gradient(&self, p: &Point3<f64>) -> Vector3<f64> {
        let q = self.clamp_point(p);
        let lo = self.grid.origin_point();
        let hi = self.grid.max_corner();
        let mut g = Vector3::zeros();
        for a in 0..3 {
            let h = self.grid.spacing[a];
            let mut plus = q;
            let mut minus = q;
            plus[a] = (q[a] + h).min(hi[a]);
            minus[a] = (q[a] - h).max(lo[a]);
            let span = plus[a] - minus[a];
            if span > 0.0 {
                g[a] = (self.sample_unchecked(&plus) - self.sample_unchecked(&minus)) / span;
            }
        }
        g
    }

    /// Unit outward direction of increasing distance, or zero where the
    /// gradient vanishes.
    pub fn normal(&self, p: &Point3<f64>) -> Vector3<f64> {
        let g = self.gradient(p);
        let n = g.norm();
        if n > 1e-12 {
            g / n
        } else {
            Vector3::zeros()
        }
    }

    /// Symmetric second difference along `dir` with step equal to the smallest
    /// spacing.
    pub fn second_derivative(&self, p: &Point3<f64>, dir: &Vector3<f64>) -> f64 {
        let q = self.clamp_point(p);
        let h = self.grid.min_spacing();
        let d = dir.normalize();
        let a = self.sample_unchecked(&self.clamp_quiet(&(q + d * h)));
        let b = self.sample_unchecked(&q);
        let c = self.sample_unchecked(&self.clamp_quiet(&(q - d * h)));
        (a - 2.0 * b + c) / (h * h)
    }

    fn clamp_quiet(&self, p: &Point3<f64>) -> Point3<f64> {
        let lo = self.grid.origin_point();
        let hi = self.grid.max_corner();
        Point3::new(p.x.clamp(lo.x, hi.x), p.y.clamp(lo.y, hi.y), p.z.clamp(lo.z, hi.z))
    }

    pub fn contains(&self, p: &Point3<f64>) -> bool {
        self.grid.contains(p)
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Writes `<stem>.f32` (raw little-endian floats, x-fastest) and
    /// `<stem>.json` (dims, spacing, origin).
    pub fn dump(&self, stem: &Path) -> Result<(PathBuf, PathBuf), GeometryError> {
        let raw = stem.with_extension("f32");
        let header = stem.with_extension("json");
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| GeometryError::Io { path, source }
        };
        let mut bytes = Vec::with_capacity(self.values.len() * 4);
        for &v in &self.values {
            bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
        fs::File::create(&raw).and_then(|mut f| f.write_all(&bytes)).map_err(io(&raw))?;
        let h = DumpHeader {
            dims: self.grid.dims,
            spacing: self.grid.spacing,
            origin: self.grid.origin,
            dtype: "f32le".into(),
            signed: self.signed,
        };
        let text = serde_json::to_string_pretty(&h).expect("header serializes");
        fs::write(&header, text).map_err(io(&header))?;
        Ok((raw, header))
    }

    /// Reads a dump written by [`SdfGrid::dump`]; values come back at f32 precision.
    pub fn load_dump(stem: &Path) -> Result<Self, GeometryError> {
        let raw = stem.with_extension("f32");
        let header = stem.with_extension("json");
        let text = fs::read_to_string(&header).map_err(|source| GeometryError::Io {
            path: header.clone(),
            source,
        })?;
        let h: DumpHeader = serde_json::from_str(&text).map_err(|e| GeometryError::Malformed {
            path: header.clone(),
            location: e.line(),
            reason: e.to_string(),
        })?;
        let bytes = fs::read(&raw).map_err(|source| GeometryError::Io {
            path: raw.clone(),
            source,
        })?;
        let grid = GridSpec::new(h.dims, h.spacing, h.origin)?;
        if bytes.len() != grid.len() * 4 {
            return Err(GeometryError::Malformed {
                path: raw,
                location: bytes.len(),
                reason: format!("expected {} bytes", grid.len() * 4),
            });
        }
        let values = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        let mut sdf = Self::new(grid, values)?;
        sdf.signed = h.signed;
        Ok(sdf)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::primitives::{icosphere, plane_patch};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::OnceLock;

    const H: f64 = 0.1;

    fn sphere_sdf() -> &'static SdfGrid {
        static S: OnceLock<SdfGrid> = OnceLock::new();
        S.get_or_init(|| build_sdf(&icosphere(1.0, 4), H, 12).unwrap())
    }

    #[test]
    fn sphere_center_and_outside() {
        let s = sphere_sdf();
        assert!((s.sample(&Point3::origin()) + 1.0).abs() <= 2.0 * H);
        assert!((s.sample(&Point3::new(2.0, 0.0, 0.0)) - 1.0).abs() <= 2.0 * H);
        assert!((s.sample(&Point3::new(0.0, -2.0, 0.0)) - 1.0).abs() <= 2.0 * H);
    }

    #[test]
    fn surface_vertices_are_near_zero() {
        let s = sphere_sdf();
        let m = icosphere(1.0, 4);
        let diag = s.grid.voxel_diagonal();
        for v in m.vertices.iter().step_by(17) {
            assert!(s.sample(v).abs() <= diag);
        }
    }

    #[test]
    fn grid_covers_padded_bounds() {
        let s = sphere_sdf();
        assert!(s.grid.origin[0] <= -1.0 - 12.0 * H + 1e-9);
        assert!(s.grid.max_corner().x >= 1.0 + 12.0 * H - 1e-9);
    }

    #[test]
    fn open_mesh_needs_fallback() {
        let plane = plane_patch(0.0, 1.0, 4);
        assert!(matches!(build_sdf(&plane, 0.2, 2), Err(GeometryError::NotWatertight)));
        let opts = SdfOptions {
            voxel_size: 0.2,
            padding: 2,
            unsigned_fallback: true,
        };
        let s = SdfGrid::from_mesh(&plane, &opts).unwrap();
        assert!(!s.signed);
        assert!(s.values.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn plane_gradient_is_exact() {
        let g = GridSpec::new([8, 8, 8], [0.1; 3], [-0.35; 3]).unwrap();
        let s = SdfGrid::from_fn(g, |p| p.z).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let p = Point3::new(rng.gen_range(-0.35..0.35), rng.gen_range(-0.35..0.35), rng.gen_range(-0.35..0.35));
            let gr = s.gradient(&p);
            assert!((gr - Vector3::z()).norm() < 1e-6, "{gr:?}");
        }
    }

    #[test]
    fn node_samples_are_exact() {
        let g = GridSpec::new([5, 6, 7], [0.1, 0.2, 0.3], [1.0, 2.0, 3.0]).unwrap();
        let s = SdfGrid::from_fn(g, |p| p.x * p.y - p.z.sin()).unwrap();
        for (i, j, k) in [(0, 0, 0), (4, 5, 6), (2, 3, 1)] {
            assert_eq!(s.sample(&g.node(i, j, k)), s.node_value(i, j, k));
        }
    }

    #[test]
    fn radial_second_derivative_spikes_at_center() {
        let s = sphere_sdf();
        let x = Vector3::x();
        let center = s.second_derivative(&Point3::origin(), &x).abs();
        for off in [0.4, 0.5, -0.5] {
            let side = s.second_derivative(&Point3::new(off, 0.0, 0.0), &x).abs();
            assert!(center > 3.0 * side, "center {center} vs {side} at {off}");
        }
    }

    #[test]
    fn dump_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let g = GridSpec::new([3, 4, 5], [0.5; 3], [0.0; 3]).unwrap();
        let s = SdfGrid::from_fn(g, |p| p.x - 0.25).unwrap();
        let (raw, _) = s.dump(&dir.path().join("phi")).unwrap();
        assert_eq!(fs::metadata(&raw).unwrap().len(), 60 * 4);
        let back = SdfGrid::load_dump(&dir.path().join("phi")).unwrap();
        assert_eq!(back.grid, s.grid);
        for (a, b) in back.values.iter().zip(&s.values) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn sphere_sdf_is_lipschitz(
            a in prop::array::uniform3(-2.2f64..2.2),
            b in prop::array::uniform3(-2.2f64..2.2),
        ) {
            let s = sphere_sdf();
            let (p, q) = (Point3::from(a), Point3::from(b));
            let eps = s.grid.voxel_diagonal();
            prop_assert!((s.sample(&p) - s.sample(&q)).abs() <= (p - q).norm() + 2.0 * eps);
        }
    }
}
