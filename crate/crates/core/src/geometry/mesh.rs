use std::collections::HashMap;

use nalgebra::{Point3, Vector3};

/// Faces with area below this are treated as degenerate.
pub const DEGENERATE_AREA: f64 = 1e-12;

/// Indexed triangle mesh in world meters.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Point3<f64>>,
    pub triangles: Vec<[u32; 3]>,
    /// Per-vertex unit normals. Derived on demand when absent.
    pub normals: Option<Vec<Vector3<f64>>>,
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Point3<f64>,
    pub max: Point3<f64>,
}

impl Aabb {
    pub fn empty() -> Self {
        Self {
            min: Point3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY),
            max: Point3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
        }
    }

    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Point3<f64>>) -> Self {
        let mut b = Self::empty();
        for p in points {
            b.grow(p);
        }
        b
    }

    pub fn grow(&mut self, p: &Point3<f64>) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    pub fn union(&self, other: &Aabb) -> Aabb {
        Aabb {
            min: self.min.inf(&other.min),
            max: self.max.sup(&other.max),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.min.x > self.max.x || self.min.y > self.max.y || self.min.z > self.max.z
    }

    pub fn extent(&self) -> Vector3<f64> {
        self.max - self.min
    }

    pub fn center(&self) -> Point3<f64> {
        nalgebra::center(&self.min, &self.max)
    }

    pub fn diagonal(&self) -> f64 {
        if self.is_empty() {
            0.0
        } else {
            self.extent().norm()
        }
    }

    pub fn surface_area(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        let e = self.extent();
        2.0 * (e.x * e.y + e.y * e.z + e.z * e.x)
    }

    pub fn contains(&self, other: &Aabb) -> bool {
        self.min.x <= other.min.x
            && self.min.y <= other.min.y
            && self.min.z <= other.min.z
            && self.max.x >= other.max.x
            && self.max.y >= other.max.y
            && self.max.z >= other.max.z
    }

    /// Squared distance from `p` to the box (zero inside).
    pub fn distance_squared(&self, p: &Point3<f64>) -> f64 {
        let mut d = 0.0;
        for i in 0..3 {
            let v = if p[i] < self.min[i] {
                self.min[i] - p[i]
            } else if p[i] > self.max[i] {
                p[i] - self.max[i]
            } else {
                0.0
            };
            d += v * v;
        }
        d
    }
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Point3<f64>>, triangles: Vec<[u32; 3]>) -> Self {
        Self {
            vertices,
            triangles,
            normals: None,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn triangle(&self, i: usize) -> [Point3<f64>; 3] {
        let [a, b, c] = self.triangles[i];
        [
            self.vertices[a as usize],
            self.vertices[b as usize],
            self.vertices[c as usize],
        ]
    }

    /// Unnormalized face normal (length = 2 × area).
    pub fn face_cross(&self, i: usize) -> Vector3<f64> {
        let [a, b, c] = self.triangle(i);
        (b - a).cross(&(c - a))
    }

    pub fn face_area(&self, i: usize) -> f64 {
        0.5 * self.face_cross(i).norm()
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len()).map(|i| self.face_area(i)).sum()
    }

    pub fn aabb(&self) -> Aabb {
        Aabb::from_points(&self.vertices)
    }

    pub fn indices_valid(&self) -> bool {
        let n = self.vertices.len() as u32;
        self.triangles.iter().all(|t| t.iter().all(|&i| i < n))
    }

    /// Drops faces with area ≤ [`DEGENERATE_AREA`] or repeated indices.
    /// Returns the number of faces removed.
    pub fn remove_degenerate(&mut self) -> usize {
        let before = self.triangles.len();
        let verts = &self.vertices;
        self.triangles.retain(|t| {
            if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
                return false;
            }
            let (a, b, c) = (
                verts[t[0] as usize],
                verts[t[1] as usize],
                verts[t[2] as usize],
            );
            0.5 * (b - a).cross(&(c - a)).norm() > DEGENERATE_AREA
        });
        let removed = before - self.triangles.len();
        if removed > 0 {
            self.normals = None;
        }
        removed
    }

    /// Undirected edge → incident face count.
    pub fn edge_counts(&self) -> HashMap<(u32, u32), u32> {
        let mut edges: HashMap<(u32, u32), u32> = HashMap::with_capacity(self.triangles.len() * 2);
        for t in &self.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                let key = if a < b { (a, b) } else { (b, a) };
                *edges.entry(key).or_insert(0) += 1;
            }
        }
        edges
    }

    /// True iff every edge is shared by exactly two triangles.
    pub fn is_watertight(&self) -> bool {
        !self.triangles.is_empty() && self.edge_counts().values().all(|&c| c == 2)
    }

    /// V − E + F over referenced vertices.
    pub fn euler_characteristic(&self) -> i64 {
        let mut used = vec![false; self.vertices.len()];
        for t in &self.triangles {
            for &i in t {
                used[i as usize] = true;
            }
        }
        let v = used.iter().filter(|&&u| u).count() as i64;
        let e = self.edge_counts().len() as i64;
        v - e + self.triangles.len() as i64
    }

    /// Signed enclosed volume (positive for outward-oriented closed meshes).
    pub fn signed_volume(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| {
                let a = self.vertices[t[0] as usize].coords;
                let b = self.vertices[t[1] as usize].coords;
                let c = self.vertices[t[2] as usize].coords;
                a.dot(&b.cross(&c)) / 6.0
            })
            .sum()
    }

    /// Area-weighted vertex normals.
    pub fn compute_normals(&mut self) {
        let mut acc = vec![Vector3::zeros(); self.vertices.len()];
        for t in &self.triangles {
            let [a, b, c] = *t;
            let n = (self.vertices[b as usize] - self.vertices[a as usize])
                .cross(&(self.vertices[c as usize] - self.vertices[a as usize]));
            for &v in &[a, b, c] {
                acc[v as usize] += n;
            }
        }
        for n in &mut acc {
            let len = n.norm();
            if len > 0.0 {
                *n /= len;
            }
        }
        self.normals = Some(acc);
    }

    pub fn ensure_normals(&mut self) -> &[Vector3<f64>] {
        if self.normals.as_ref().map(|n| n.len()) != Some(self.vertices.len()) {
            self.compute_normals();
        }
        self.normals.as_deref().unwrap()
    }

    /// Unique sorted neighbor lists.
    pub fn vertex_neighbors(&self) -> Vec<Vec<u32>> {
        let mut nb: Vec<Vec<u32>> = vec![Vec::new(); self.vertices.len()];
        for t in &self.triangles {
            for k in 0..3 {
                let a = t[k];
                let b = t[(k + 1) % 3];
                nb[a as usize].push(b);
                nb[b as usize].push(a);
            }
        }
        for list in &mut nb {
            list.sort_unstable();
            list.dedup();
        }
        nb
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.vertices {
            v.coords *= s;
        }
    }

    pub fn flip_orientation(&mut self) {
        for t in &mut self.triangles {
            t.swap(1, 2);
        }
        if let Some(n) = &mut self.normals {
            for v in n {
                *v = -*v;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use crate::geometry::primitives::{icosphere, unit_cube};

    #[test]
    fn cube_is_watertight_with_euler_two() {
        let m = unit_cube();
        assert!(m.is_watertight());
        assert_eq!(m.euler_characteristic(), 2);
        assert!((m.signed_volume() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn open_mesh_is_not_watertight() {
        let mut m = unit_cube();
        m.triangles.pop();
        assert!(!m.is_watertight());
    }

    #[test]
    fn degenerate_removal() {
        let mut m = icosphere(1.0, 1);
        let n = m.triangles.len();
        m.triangles.push([0, 0, 1]);
        m.vertices.push(m.vertices[0]);
        let dup = (m.vertices.len() - 1) as u32;
        m.triangles.push([0, dup, 1]);
        assert_eq!(m.remove_degenerate(), 2);
        assert_eq!(m.triangles.len(), n);
    }

    #[test]
    fn icosphere_normals_point_outward() {
        let mut m = icosphere(2.0, 2);
        let normals = m.ensure_normals().to_vec();
        for (v, n) in m.vertices.iter().zip(&normals) {
            assert!((v.coords.normalize() - n).norm() < 0.05);
        }
    }
}
