//! Grassfire-style medial axis detection: march inward from the surface along
//! the distance gradient until the fronts collide.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::{Point3, Vector3};
use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{GeometryError, SkeletonError};
use crate::geometry::{SdfGrid, TriangleMesh};

pub const DEFAULT_SURFACE_SAMPLES: usize = 20_000;
pub const DEFAULT_SPIKE_FACTOR: f64 = 5.0;
/// Minimum directional gradient on the far side of a candidate. Genuine
/// medial points separate opposite walls (g ≈ +1); creases between walls
/// meeting at an angle only reach g ≈ cos θ.
pub const DEFAULT_MIN_REVERSAL: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MedialOptions {
    pub n_surface_samples: usize,
    /// Spike threshold as a multiple of the running median |∂²φ/∂d²|.
    pub spike_factor: f64,
    pub min_reversal: f64,
    /// Defaults to twice the grid diagonal in steps when `None`.
    pub max_steps: Option<usize>,
    pub seed: u64,
}

impl Default for MedialOptions {
    fn default() -> Self {
        Self {
            n_surface_samples: DEFAULT_SURFACE_SAMPLES,
            spike_factor: DEFAULT_SPIKE_FACTOR,
            min_reversal: DEFAULT_MIN_REVERSAL,
            max_steps: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MedialPointSet {
    pub points: Vec<Point3<f64>>,
    /// Local lumen radius |φ| at each point.
    pub radii: Vec<f64>,
    /// Index of the surface sample each point was marched from.
    pub sources: Vec<usize>,
    /// Marches that left the grid, left the lumen or ran out of steps.
    pub dropped: usize,
}

impl MedialPointSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// ASCII PLY with a per-vertex `radius` property.
    pub fn write_ply(&self, path: &Path) -> Result<(), GeometryError> {
        let mut out = String::new();
        out.push_str("ply\nformat ascii 1.0\n");
        out.push_str(&format!("element vertex {}\n", self.points.len()));
        out.push_str("property float x\nproperty float y\nproperty float z\nproperty float radius\nend_header\n");
        for (p, r) in self.points.iter().zip(&self.radii) {
            out.push_str(&format!("{} {} {} {}\n", p.x as f32, p.y as f32, p.z as f32, *r as f32));
        }
        fs::File::create(path)
            .and_then(|mut f| f.write_all(out.as_bytes()))
            .map_err(|source| GeometryError::Io {
                path: path.to_path_buf(),
                source,
            })
    }
}

/// Area-weighted uniform samples on the mesh surface.
pub fn sample_surface(mesh: &TriangleMesh, n: usize, seed: u64) -> Vec<Point3<f64>> {
    let areas: Vec<f64> = (0..mesh.triangles.len()).map(|i| mesh.face_area(i)).collect();
    let Ok(dist) = WeightedIndex::new(&areas) else {
        return Vec::new();
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let [a, b, c] = mesh.triangle(dist.sample(&mut rng));
            let r1: f64 = rng.gen::<f64>().sqrt();
            let r2: f64 = rng.gen();
            Point3::from(a.coords * (1.0 - r1) + b.coords * (r1 * (1.0 - r2)) + c.coords * (r1 * r2))
        })
        .collect()
}

enum March {
    Found(Point3<f64>),
    Dropped,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

struct Marcher<'a> {
    sdf: &'a SdfGrid,
    step: f64,
    spacing: f64,
    max_steps: usize,
    spike_factor: f64,
    spike_floor: f64,
    min_reversal: f64,
}

impl Marcher<'_> {
    /// Accepts a candidate only if it is interior and the gradient on its far
    /// side points clearly back along the march.
    fn accept(&self, p: &Point3<f64>, d: &Vector3<f64>) -> bool {
        if !self.sdf.contains(p) || self.sdf.sample(p) >= 0.0 {
            return false;
        }
        let beyond = p + d * self.spacing;
        self.sdf.contains(&beyond) && self.sdf.gradient(&beyond).dot(d) >= self.min_reversal
    }

    fn march(&self, start: &Point3<f64>) -> March {
        let grad = self.sdf.gradient(start);
        let norm = grad.norm();
        if norm < 1e-9 {
            return March::Dropped;
        }
        let d = -grad / norm;
        let at = |k: usize| start + d * (k as f64 * self.step);
        let g_at = |x: &Point3<f64>| self.sdf.gradient(x).dot(&d);
        let mut history: Vec<f64> = Vec::new();
        let mut prev_g = g_at(start);
        let mut was_inside = false;
        let mut k = 1;
        while k <= self.max_steps {
            let x = at(k);
            if !self.sdf.contains(&x) {
                return March::Dropped;
            }
            let phi = self.sdf.sample(&x);
            if phi < 0.0 {
                was_inside = true;
            } else if was_inside || k > 4 {
                return March::Dropped;
            }
            let g = g_at(&x);
            if prev_g < 0.0 && g >= 0.0 {
                let frac = prev_g / (prev_g - g);
                let p = start + d * ((k as f64 - 1.0 + frac) * self.step);
                if self.accept(&p, &d) {
                    return March::Found(p);
                }
            } else {
                let d2 = self.sdf.second_derivative(&x, &d).abs();
                if history.len() >= 3 {
                    let threshold = (self.spike_factor * median(&mut history.clone())).max(self.spike_floor);
                    if d2 > threshold {
                        if let Some(p) = self.reversal_ahead(start, &d, k, g) {
                            return March::Found(p);
                        }
                        if self.accept(&x, &d) {
                            return March::Found(x);
                        }
                    }
                }
                history.push(d2);
            }
            prev_g = g;
            k += 1;
        }
        March::Dropped
    }

    /// Looks up to two steps past a spike for the sign change it announces.
    fn reversal_ahead(&self, start: &Point3<f64>, d: &Vector3<f64>, k: usize, g_k: f64) -> Option<Point3<f64>> {
        let mut prev = g_k;
        for j in k + 1..=k + 2 {
            let x = start + d * (j as f64 * self.step);
            if !self.sdf.contains(&x) {
                return None;
            }
            let g = self.sdf.gradient(&x).dot(d);
            if prev < 0.0 && g >= 0.0 {
                let frac = prev / (prev - g);
                let p = start + d * ((j as f64 - 1.0 + frac) * self.step);
                return self.accept(&p, d).then_some(p);
            }
            prev = g;
        }
        None
    }
}

/// Marches from `n_surface_samples` surface points along the frozen inward
/// direction −∇φ̂ with half-voxel steps and records where the fronts meet.
pub fn extract_medial_axis(
    sdf: &SdfGrid,
    mesh: &TriangleMesh,
    opts: &MedialOptions,
) -> Result<MedialPointSet, SkeletonError> {
    let samples = sample_surface(mesh, opts.n_surface_samples, opts.seed);
    extract_from_samples(sdf, &samples, opts)
}

/// Same as [`extract_medial_axis`] with caller-supplied surface samples.
pub fn extract_from_samples(
    sdf: &SdfGrid,
    samples: &[Point3<f64>],
    opts: &MedialOptions,
) -> Result<MedialPointSet, SkeletonError> {
    let spacing = sdf.grid.min_spacing();
    let step = spacing / 2.0;
    let diag = (sdf.grid.max_corner() - sdf.grid.origin_point()).norm();
    let marcher = Marcher {
        sdf,
        step,
        spacing,
        max_steps: opts.max_steps.unwrap_or((2.0 * diag / step).ceil() as usize),
        spike_factor: opts.spike_factor,
        spike_floor: 0.5 / spacing,
        min_reversal: opts.min_reversal,
    };
    let results: Vec<March> = samples.par_iter().map(|s| marcher.march(s)).collect();
    let mut set = MedialPointSet::default();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            March::Found(p) => {
                let phi = sdf.sample(&p);
                if phi < 0.0 {
                    set.points.push(p);
                    set.radii.push(-phi);
                    set.sources.push(i);
                } else {
                    set.dropped += 1;
                }
            }
            March::Dropped => set.dropped += 1,
        }
    }
    if set.dropped > 0 {
        log::info!("medial axis: {} of {} marches dropped", set.dropped, samples.len());
    }
    if set.is_empty() {
        return Err(SkeletonError::NoInterior { dropped: set.dropped });
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::primitives::{capped_cylinder, icosphere, plane_patch};
    use crate::geometry::GridSpec;

    #[test]
    fn analytic_cylinder_points_lie_on_axis() {
        let (r, h) = (0.004, 0.0005);
        let g = GridSpec::new([25, 25, 41], [h; 3], [-0.006, -0.006, 0.0]).unwrap();
        let sdf = SdfGrid::from_fn(g, |p| (p.x * p.x + p.y * p.y).sqrt() - r).unwrap();
        let mesh = capped_cylinder(r, 0.004, 0.016, 48, 12);
        let opts = MedialOptions {
            n_surface_samples: 2000,
            ..Default::default()
        };
        let set = extract_medial_axis(&sdf, &mesh, &opts).unwrap();
        assert!(set.len() > 1000, "only {} points", set.len());
        for (p, rad) in set.points.iter().zip(&set.radii) {
            assert!((p.x * p.x + p.y * p.y).sqrt() <= h, "{p:?} off axis");
            assert!((rad - r).abs() <= h);
        }
        assert_eq!(set.len() + set.dropped, 2000);
    }

    #[test]
    fn analytic_sphere_points_cluster_at_center() {
        let (r, h) = (0.005, 0.0005);
        let g = GridSpec::new([29; 3], [h; 3], [-0.007; 3]).unwrap();
        let sdf = SdfGrid::from_fn(g, |p| p.coords.norm() - r).unwrap();
        let mut mesh = icosphere(r, 3);
        mesh.normals = None;
        let set = extract_medial_axis(
            &sdf,
            &mesh,
            &MedialOptions {
                n_surface_samples: 500,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(set.len() > 400);
        for p in &set.points {
            assert!(p.coords.norm() <= 2.0 * h, "{p:?}");
        }
    }

    #[test]
    fn half_space_has_no_interior() {
        let g = GridSpec::new([11; 3], [0.001; 3], [-0.005; 3]).unwrap();
        let sdf = SdfGrid::from_fn(g, |p| p.z).unwrap();
        let mesh = plane_patch(0.0, 0.004, 4);
        let err = extract_medial_axis(
            &sdf,
            &mesh,
            &MedialOptions {
                n_surface_samples: 200,
                ..Default::default()
            },
        )
        .unwrap_err();
        assert!(matches!(err, SkeletonError::NoInterior { dropped: 200 }));
    }

    #[test]
    fn ply_export_lists_radius() {
        let set = MedialPointSet {
            points: vec![Point3::new(0.0, 0.0, 1.0)],
            radii: vec![0.5],
            sources: vec![0],
            dropped: 0,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("medial_axis.ply");
        set.write_ply(&path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.contains("property float radius"));
        assert!(text.trim_end().ends_with("0 0 1 0.5"));
    }
}
