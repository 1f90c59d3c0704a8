//! Bounding volume hierarchy over mesh triangles: nearest-hit ray casting,
//! closest-point queries and a hierarchical generalized winding number.

use std::f64::consts::PI;

use nalgebra::{Point3, Vector3};

use super::mesh::{Aabb, TriangleMesh};

pub const DEFAULT_LEAF_SIZE: usize = 4;
/// Rays only report hits with `t` above this.
pub const RAY_T_MIN: f64 = 1e-6;
/// Barycentric slack so rays through shared edges and vertices never slip
/// between adjacent triangles.
const EDGE_EPS: f64 = 1e-9;
const SAH_BINS: usize = 16;
/// Far-field acceptance ratio for the winding-number dipole expansion.
const WINDING_BETA: f64 = 3.0;

#[derive(Debug, Clone, Copy)]
struct Node {
    min: [f64; 3],
    max: [f64; 3],
    /// Leaf: first primitive. Interior: index of the right child (left is next).
    offset: u32,
    /// Primitive count; zero marks an interior node.
    count: u32,
    axis: u8,
}

/// Per-node far-field data for winding numbers.
#[derive(Debug, Clone, Copy)]
struct Dipole {
    center: Point3<f64>,
    area_normal: Vector3<f64>,
    area: f64,
    radius: f64,
}

#[derive(Debug, Clone, Copy)]
struct Tri {
    v0: Point3<f64>,
    e1: Vector3<f64>,
    e2: Vector3<f64>,
}

/// Nearest intersection returned by [`Bvh::raycast`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayHit {
    pub hit: bool,
    pub t: f64,
    pub triangle: usize,
    /// Weights of the triangle's three vertices.
    pub barycentric: [f64; 3],
    pub normal: Vector3<f64>,
    pub point: Point3<f64>,
}

impl RayHit {
    pub fn miss() -> Self {
        Self {
            hit: false,
            t: f64::INFINITY,
            triangle: usize::MAX,
            barycentric: [0.0; 3],
            normal: Vector3::zeros(),
            point: Point3::origin(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosestPoint {
    pub point: Point3<f64>,
    pub distance: f64,
    pub triangle: usize,
}

#[derive(Debug, Clone)]
pub struct Bvh {
    mesh: TriangleMesh,
    nodes: Vec<Node>,
    dipoles: Vec<Dipole>,
    /// Original triangle index for each leaf slot.
    order: Vec<u32>,
    tris: Vec<Tri>,
    leaf_size: usize,
}

struct BuildItem {
    bounds: Aabb,
    centroid: Point3<f64>,
    index: u32,
}

impl Bvh {
    pub fn build(mesh: &TriangleMesh) -> Self {
        Self::with_leaf_size(mesh, DEFAULT_LEAF_SIZE)
    }

    /// Binned-SAH build. Vertex normals are derived if the mesh lacks them.
    pub fn with_leaf_size(mesh: &TriangleMesh, leaf_size: usize) -> Self {
        let mut mesh = mesh.clone();
        mesh.ensure_normals();
        let leaf_size = leaf_size.max(1);
        let mut items: Vec<BuildItem> = (0..mesh.triangles.len())
            .map(|i| {
                let [a, b, c] = mesh.triangle(i);
                let bounds = Aabb::from_points([&a, &b, &c]);
                BuildItem {
                    bounds,
                    centroid: bounds.center(),
                    index: i as u32,
                }
            })
            .collect();
        let mut bvh = Bvh {
            nodes: Vec::with_capacity(2 * items.len() / leaf_size + 1),
            dipoles: Vec::new(),
            order: Vec::with_capacity(items.len()),
            tris: Vec::new(),
            leaf_size,
            mesh,
        };
        if !items.is_empty() {
            let n = items.len();
            bvh.build_node(&mut items, 0, n);
        }
        bvh.tris = bvh
            .order
            .iter()
            .map(|&i| {
                let [a, b, c] = bvh.mesh.triangle(i as usize);
                Tri { v0: a, e1: b - a, e2: c - a }
            })
            .collect();
        bvh.dipoles = vec![
            Dipole {
                center: Point3::origin(),
                area_normal: Vector3::zeros(),
                area: 0.0,
                radius: 0.0
            };
            bvh.nodes.len()
        ];
        if !bvh.nodes.is_empty() {
            bvh.fill_dipoles(0);
        }
        bvh
    }

    fn build_node(&mut self, items: &mut [BuildItem], start: usize, end: usize) -> usize {
        let slice = &mut items[start..end];
        let bounds = slice.iter().fold(Aabb::empty(), |b, it| b.union(&it.bounds));
        let node_index = self.nodes.len();
        self.nodes.push(Node {
            min: bounds.min.into(),
            max: bounds.max.into(),
            offset: 0,
            count: 0,
            axis: 0,
        });
        let n = slice.len();
        let make_leaf = |this: &mut Self, slice: &[BuildItem]| {
            let first = this.order.len() as u32;
            this.order.extend(slice.iter().map(|it| it.index));
            let node = &mut this.nodes[node_index];
            node.offset = first;
            node.count = slice.len() as u32;
        };
        if n <= self.leaf_size {
            make_leaf(self, slice);
            return node_index;
        }

        let cbounds = slice.iter().fold(Aabb::empty(), |mut b, it| {
            b.grow(&it.centroid);
            b
        });
        let ext = cbounds.extent();
        let axis = if ext.x >= ext.y && ext.x >= ext.z {
            0
        } else if ext.y >= ext.z {
            1
        } else {
            2
        };
        if ext[axis] <= 0.0 {
            // All centroids coincide; split by count.
            let mid = n / 2;
            return self.finish_split(items, start, start + mid, end, node_index, axis);
        }

        let mut bins = [(Aabb::empty(), 0usize); SAH_BINS];
        let lo = cbounds.min[axis];
        let scale = SAH_BINS as f64 / ext[axis];
        let bin_of = |c: f64| (((c - lo) * scale) as usize).min(SAH_BINS - 1);
        for it in slice.iter() {
            let b = bin_of(it.centroid[axis]);
            bins[b].0 = bins[b].0.union(&it.bounds);
            bins[b].1 += 1;
        }
        let mut left_area = [0.0; SAH_BINS];
        let mut left_count = [0usize; SAH_BINS];
        let (mut acc, mut cnt) = (Aabb::empty(), 0);
        for i in 0..SAH_BINS {
            acc = acc.union(&bins[i].0);
            cnt += bins[i].1;
            left_area[i] = acc.surface_area();
            left_count[i] = cnt;
        }
        let (mut acc, mut cnt) = (Aabb::empty(), 0);
        let mut best = (f64::INFINITY, 0usize);
        for i in (1..SAH_BINS).rev() {
            acc = acc.union(&bins[i].0);
            cnt += bins[i].1;
            let cost = left_area[i - 1] * left_count[i - 1] as f64 + acc.surface_area() * cnt as f64;
            if left_count[i - 1] > 0 && cnt > 0 && cost < best.0 {
                best = (cost, i);
            }
        }
        let leaf_cost = bounds.surface_area() * n as f64;
        if best.0.is_infinite() || (n <= 2 * self.leaf_size && best.0 >= leaf_cost) {
            if n <= 4 * self.leaf_size && best.0.is_infinite() {
                make_leaf(self, slice);
                return node_index;
            }
            let mid = n / 2;
            slice.select_nth_unstable_by(mid, |a, b| a.centroid[axis].total_cmp(&b.centroid[axis]));
            return self.finish_split(items, start, start + mid, end, node_index, axis);
        }
        let split_bin = best.1;
        let mut i = 0;
        let mut j = n;
        while i < j {
            if bin_of(slice[i].centroid[axis]) < split_bin {
                i += 1;
            } else {
                j -= 1;
                slice.swap(i, j);
            }
        }
        self.finish_split(items, start, start + i, end, node_index, axis)
    }

    fn finish_split(
        &mut self,
        items: &mut [BuildItem],
        start: usize,
        mid: usize,
        end: usize,
        node_index: usize,
        axis: usize,
    ) -> usize {
        self.build_node(items, start, mid);
        let right = self.build_node(items, mid, end);
        let node = &mut self.nodes[node_index];
        node.offset = right as u32;
        node.count = 0;
        node.axis = axis as u8;
        node_index
    }

    fn fill_dipoles(&mut self, node: usize) {
        let n = self.nodes[node];
        let (area_normal, weighted, area) = if n.count > 0 {
            let mut an = Vector3::zeros();
            let mut wc = Vector3::zeros();
            let mut area = 0.0;
            for slot in n.offset as usize..(n.offset + n.count) as usize {
                let t = &self.tris[slot];
                let cross = t.e1.cross(&t.e2);
                let a = 0.5 * cross.norm();
                an += 0.5 * cross;
                wc += a * (t.v0.coords + (t.e1 + t.e2) / 3.0);
                area += a;
            }
            (an, wc, area)
        } else {
            let (l, r) = (node + 1, n.offset as usize);
            self.fill_dipoles(l);
            self.fill_dipoles(r);
            let (dl, dr) = (self.dipoles[l], self.dipoles[r]);
            let (al, ar) = (dl.area, dr.area);
            (
                dl.area_normal + dr.area_normal,
                dl.center.coords * al + dr.center.coords * ar,
                al + ar,
            )
        };
        let center = if area > 0.0 {
            Point3::from(weighted / area)
        } else {
            Point3::from((Vector3::from(n.min) + Vector3::from(n.max)) / 2.0)
        };
        let radius = {
            let mut r2: f64 = 0.0;
            for cx in [n.min[0], n.max[0]] {
                for cy in [n.min[1], n.max[1]] {
                    for cz in [n.min[2], n.max[2]] {
                        r2 = r2.max((Point3::new(cx, cy, cz) - center).norm_squared());
                    }
                }
            }
            r2.sqrt()
        };
        self.dipoles[node] = Dipole {
            center,
            area_normal,
            area,
            radius,
        };
    }

    pub fn mesh(&self) -> &TriangleMesh {
        &self.mesh
    }

    pub fn leaf_size(&self) -> usize {
        self.leaf_size
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn bounds(&self) -> Aabb {
        self.nodes.first().map_or(Aabb::empty(), |n| Aabb {
            min: n.min.into(),
            max: n.max.into(),
        })
    }

    /// Checks structural invariants: every triangle in exactly one leaf and
    /// parent boxes containing child boxes.
    pub fn validate(&self) -> bool {
        let mut seen = vec![0u32; self.mesh.triangles.len()];
        for &i in &self.order {
            seen[i as usize] += 1;
        }
        if seen.iter().any(|&c| c != 1) {
            return false;
        }
        let boxed = |n: &Node| Aabb {
            min: n.min.into(),
            max: n.max.into(),
        };
        for (i, n) in self.nodes.iter().enumerate() {
            if n.count == 0 {
                let (l, r) = (&self.nodes[i + 1], &self.nodes[n.offset as usize]);
                if !boxed(n).contains(&boxed(l)) || !boxed(n).contains(&boxed(r)) {
                    return false;
                }
            } else {
                for s in n.offset..n.offset + n.count {
                    let [a, b, c] = self.mesh.triangle(self.order[s as usize] as usize);
                    if !boxed(n).contains(&Aabb::from_points([&a, &b, &c])) {
                        return false;
                    }
                }
            }
        }
        true
    }

    #[inline]
    fn slab(n: &Node, o: &Point3<f64>, inv: &Vector3<f64>, t_max: f64) -> f64 {
        let mut t0 = RAY_T_MIN.min(0.0);
        let mut t1 = t_max;
        for a in 0..3 {
            let mut tn = (n.min[a] - o[a]) * inv[a];
            let mut tf = (n.max[a] - o[a]) * inv[a];
            if tn > tf {
                std::mem::swap(&mut tn, &mut tf);
            }
            // NaN from 0 * inf keeps the previous bound.
            if tn > t0 {
                t0 = tn;
            }
            if tf < t1 {
                t1 = tf;
            }
        }
        if t0 <= t1 * (1.0 + 4.0 * f64::EPSILON) {
            t0
        } else {
            f64::INFINITY
        }
    }

    /// Möller–Trumbore. Returns (t, u, v) for hits with t in (t_min, t_max].
    #[inline]
    fn intersect(tri: &Tri, o: &Point3<f64>, d: &Vector3<f64>, t_max: f64) -> Option<(f64, f64, f64)> {
        let p = d.cross(&tri.e2);
        let det = tri.e1.dot(&p);
        if det == 0.0 {
            return None;
        }
        let inv_det = 1.0 / det;
        let s = o - tri.v0;
        let u = s.dot(&p) * inv_det;
        if !(-EDGE_EPS..=1.0 + EDGE_EPS).contains(&u) {
            return None;
        }
        let q = s.cross(&tri.e1);
        let v = d.dot(&q) * inv_det;
        if v < -EDGE_EPS || u + v > 1.0 + EDGE_EPS {
            return None;
        }
        let t = tri.e2.dot(&q) * inv_det;
        if t > RAY_T_MIN && t <= t_max {
            Some((t, u, v))
        } else {
            None
        }
    }

    /// Nearest hit with `t ∈ (1e-6, t_max]`. `dir` should be unit length.
    pub fn raycast(&self, origin: &Point3<f64>, dir: &Vector3<f64>, t_max: f64) -> RayHit {
        if self.nodes.is_empty() {
            return RayHit::miss();
        }
        let inv = Vector3::new(1.0 / dir.x, 1.0 / dir.y, 1.0 / dir.z);
        let mut best_t = t_max;
        let mut best: Option<(usize, f64, f64)> = None;
        let mut stack = [0u32; 64];
        let mut sp = 0usize;
        let mut node = 0usize;
        if Self::slab(&self.nodes[0], origin, &inv, best_t).is_infinite() {
            return RayHit::miss();
        }
        loop {
            let n = &self.nodes[node];
            if n.count > 0 {
                for slot in n.offset as usize..(n.offset + n.count) as usize {
                    if let Some((t, u, v)) = Self::intersect(&self.tris[slot], origin, dir, best_t) {
                        best_t = t;
                        best = Some((slot, u, v));
                    }
                }
            } else {
                let (l, r) = (node + 1, n.offset as usize);
                let tl = Self::slab(&self.nodes[l], origin, &inv, best_t);
                let tr = Self::slab(&self.nodes[r], origin, &inv, best_t);
                let (near, far, tn, tf) = if tl <= tr { (l, r, tl, tr) } else { (r, l, tr, tl) };
                if tn.is_finite() {
                    if tf.is_finite() {
                        stack[sp] = far as u32;
                        sp += 1;
                    }
                    node = near;
                    continue;
                }
            }
            // Pop, skipping subtrees that cannot beat the current best.
            loop {
                if sp == 0 {
                    return self.finish_hit(origin, dir, best_t, best);
                }
                sp -= 1;
                let cand = stack[sp] as usize;
                if Self::slab(&self.nodes[cand], origin, &inv, best_t).is_finite() {
                    node = cand;
                    break;
                }
            }
        }
    }

    fn finish_hit(&self, origin: &Point3<f64>, dir: &Vector3<f64>, t: f64, best: Option<(usize, f64, f64)>) -> RayHit {
        let Some((slot, u, v)) = best else {
            return RayHit::miss();
        };
        let tri_index = self.order[slot] as usize;
        let w = [1.0 - u - v, u, v];
        let ids = self.mesh.triangles[tri_index];
        let normals = self.mesh.normals.as_ref().unwrap();
        let mut n = normals[ids[0] as usize] * w[0] + normals[ids[1] as usize] * w[1] + normals[ids[2] as usize] * w[2];
        let len = n.norm();
        if len > 1e-12 {
            n /= len;
        } else {
            let tri = &self.tris[slot];
            n = tri.e1.cross(&tri.e2).normalize();
        }
        RayHit {
            hit: true,
            t,
            triangle: tri_index,
            barycentric: w,
            normal: n,
            point: origin + dir * t,
        }
    }

    /// Geometric (face) normal of a triangle.
    pub fn face_normal(&self, triangle: usize) -> Vector3<f64> {
        self.mesh.face_cross(triangle).normalize()
    }

    /// Closest surface point to `p`.
    pub fn closest_point(&self, p: &Point3<f64>) -> Option<ClosestPoint> {
        if self.nodes.is_empty() {
            return None;
        }
        let mut best_d2 = f64::INFINITY;
        let mut best = (Point3::origin(), usize::MAX);
        let mut stack: Vec<(u32, f64)> = Vec::with_capacity(64);
        let box_d2 = |n: &Node| Aabb { min: n.min.into(), max: n.max.into() }.distance_squared(p);
        stack.push((0, box_d2(&self.nodes[0])));
        while let Some((ni, d2)) = stack.pop() {
            if d2 >= best_d2 {
                continue;
            }
            let n = &self.nodes[ni as usize];
            if n.count > 0 {
                for slot in n.offset as usize..(n.offset + n.count) as usize {
                    let t = &self.tris[slot];
                    let q = closest_point_on_triangle(p, &t.v0, &(t.v0 + t.e1), &(t.v0 + t.e2));
                    let d2 = (q - p).norm_squared();
                    if d2 < best_d2 {
                        best_d2 = d2;
                        best = (q, self.order[slot] as usize);
                    }
                }
            } else {
                let (l, r) = (ni + 1, n.offset);
                let (dl, dr) = (box_d2(&self.nodes[l as usize]), box_d2(&self.nodes[r as usize]));
                // Push the farther child first so the nearer is popped next.
                if dl <= dr {
                    stack.push((r, dr));
                    stack.push((l, dl));
                } else {
                    stack.push((l, dl));
                    stack.push((r, dr));
                }
            }
        }
        Some(ClosestPoint {
            point: best.0,
            distance: best_d2.sqrt(),
            triangle: best.1,
        })
    }

    /// Generalized winding number at `p` (≈1 inside a closed outward-oriented
    /// surface, ≈0 outside). Distant subtrees use a dipole approximation.
    pub fn winding_number(&self, p: &Point3<f64>) -> f64 {
        if self.nodes.is_empty() {
            return 0.0;
        }
        let mut total = 0.0;
        let mut stack: Vec<u32> = Vec::with_capacity(64);
        stack.push(0);
        while let Some(ni) = stack.pop() {
            let n = &self.nodes[ni as usize];
            let d = &self.dipoles[ni as usize];
            let r = d.center - p;
            let dist = r.norm();
            if dist > WINDING_BETA * d.radius && dist > 0.0 {
                total += r.dot(&d.area_normal) / (dist * dist * dist);
                continue;
            }
            if n.count > 0 {
                for slot in n.offset as usize..(n.offset + n.count) as usize {
                    total += solid_angle(&self.tris[slot], p);
                }
            } else {
                stack.push(ni + 1);
                stack.push(n.offset);
            }
        }
        total / (4.0 * PI)
    }

    /// Exact winding number by summing every triangle's solid angle.
    pub fn winding_number_exact(&self, p: &Point3<f64>) -> f64 {
        self.tris.iter().map(|t| solid_angle(t, p)).sum::<f64>() / (4.0 * PI)
    }
}

/// Signed solid angle subtended by a triangle (Van Oosterom–Strackee).
fn solid_angle(t: &Tri, p: &Point3<f64>) -> f64 {
    let a = t.v0 - p;
    let b = a + t.e1;
    let c = a + t.e2;
    let (la, lb, lc) = (a.norm(), b.norm(), c.norm());
    let num = a.dot(&b.cross(&c));
    let den = la * lb * lc + a.dot(&b) * lc + a.dot(&c) * lb + b.dot(&c) * la;
    2.0 * num.atan2(den)
}

/// Closest point on triangle `abc` to `p` (Ericson, Real-Time Collision Detection).
pub fn closest_point_on_triangle(p: &Point3<f64>, a: &Point3<f64>, b: &Point3<f64>, c: &Point3<f64>) -> Point3<f64> {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return a + ab * v;
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return a + ac * w;
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + (c - b) * w;
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    a + ab * v + ac * w
}
