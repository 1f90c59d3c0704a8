//! Analytic test meshes.

use std::collections::HashMap;
use std::f64::consts::PI;

use nalgebra::{Point3, Vector3};

use super::mesh::TriangleMesh;

/// Geodesic sphere from a subdivided icosahedron. Level 3 gives 642 vertices.
pub fn icosphere(radius: f64, subdivisions: u32) -> TriangleMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<Vector3<f64>> = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ]
    .iter()
    .map(|v| Vector3::new(v[0], v[1], v[2]).normalize())
    .collect();
    let mut faces: Vec<[u32; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut cache: HashMap<(u32, u32), u32> = HashMap::new();
        let mut midpoint = |a: u32, b: u32, verts: &mut Vec<Vector3<f64>>| -> u32 {
            let key = if a < b { (a, b) } else { (b, a) };
            *cache.entry(key).or_insert_with(|| {
                verts.push((verts[a as usize] + verts[b as usize]).normalize());
                (verts.len() - 1) as u32
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = midpoint(a, b, &mut verts);
            let bc = midpoint(b, c, &mut verts);
            let ca = midpoint(c, a, &mut verts);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    let vertices = verts.iter().map(|v| Point3::from(v * radius)).collect();
    let mut mesh = TriangleMesh::new(vertices, faces);
    if mesh.signed_volume() < 0.0 {
        mesh.flip_orientation();
    }
    mesh
}

/// Axis-aligned unit cube [0,1]³, outward oriented.
pub fn unit_cube() -> TriangleMesh {
    let vertices = (0..8)
        .map(|i| Point3::new((i & 1) as f64, ((i >> 1) & 1) as f64, ((i >> 2) & 1) as f64))
        .collect();
    let triangles = vec![
        [0, 2, 1],
        [1, 2, 3],
        [4, 5, 6],
        [5, 7, 6],
        [0, 1, 4],
        [1, 5, 4],
        [2, 6, 3],
        [3, 6, 7],
        [0, 4, 2],
        [2, 4, 6],
        [1, 3, 5],
        [3, 7, 5],
    ];
    TriangleMesh::new(vertices, triangles)
}

/// Square grid patch of side `2 * half_size` in the plane z = `z`,
/// subdivided into `n × n` quads, normal facing −z.
pub fn plane_patch(z: f64, half_size: f64, n: usize) -> TriangleMesh {
    let n = n.max(1);
    let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            let x = -half_size + 2.0 * half_size * i as f64 / n as f64;
            let y = -half_size + 2.0 * half_size * j as f64 / n as f64;
            vertices.push(Point3::new(x, y, z));
        }
    }
    let idx = |i: usize, j: usize| (j * (n + 1) + i) as u32;
    let mut triangles = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            // Wound clockwise seen from +z, so the geometric normal is −z.
            triangles.push([idx(i, j), idx(i, j + 1), idx(i + 1, j)]);
            triangles.push([idx(i + 1, j), idx(i, j + 1), idx(i + 1, j + 1)]);
        }
    }
    TriangleMesh::new(vertices, triangles)
}

/// Closed cylinder of `radius` along +z from z0 to z1, with flat caps.
/// Outward oriented.
pub fn capped_cylinder(radius: f64, z0: f64, z1: f64, segments: usize, rings: usize) -> TriangleMesh {
    let segments = segments.max(3);
    let rings = rings.max(1);
    let mut vertices = Vec::new();
    for r in 0..=rings {
        let z = z0 + (z1 - z0) * r as f64 / rings as f64;
        for s in 0..segments {
            let a = 2.0 * PI * s as f64 / segments as f64;
            vertices.push(Point3::new(radius * a.cos(), radius * a.sin(), z));
        }
    }
    let ring = |r: usize, s: usize| (r * segments + s % segments) as u32;
    let mut triangles = Vec::new();
    for r in 0..rings {
        for s in 0..segments {
            triangles.push([ring(r, s), ring(r, s + 1), ring(r + 1, s)]);
            triangles.push([ring(r, s + 1), ring(r + 1, s + 1), ring(r + 1, s)]);
        }
    }
    let bottom = vertices.len() as u32;
    vertices.push(Point3::new(0.0, 0.0, z0));
    let top = vertices.len() as u32;
    vertices.push(Point3::new(0.0, 0.0, z1));
    for s in 0..segments {
        triangles.push([bottom, ring(0, s + 1), ring(0, s)]);
        triangles.push([top, ring(rings, s), ring(rings, s + 1)]);
    }
    let mut mesh = TriangleMesh::new(vertices, triangles);
    if mesh.signed_volume() < 0.0 {
        mesh.flip_orientation();
    }
    mesh
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn icosphere_level3_has_642_vertices() {
        let m = icosphere(1.0, 3);
        assert_eq!(m.vertices.len(), 642);
        assert_eq!(m.triangles.len(), 1280);
        assert!(m.is_watertight());
        assert_eq!(m.euler_characteristic(), 2);
        assert!(m.signed_volume() > 0.0);
    }

    #[test]
    fn cylinder_is_closed() {
        let m = capped_cylinder(1.0, 0.0, 2.0, 32, 4);
        assert!(m.is_watertight());
        assert_eq!(m.euler_characteristic(), 2);
        let exact = PI * 2.0;
        assert!((m.signed_volume() - exact).abs() / exact < 0.01);
    }

    #[test]
    fn plane_patch_faces_minus_z() {
        let m = plane_patch(0.5, 1.0, 3);
        for i in 0..m.triangles.len() {
            assert!(m.face_cross(i).normalize().z < -0.999);
        }
    }
}
