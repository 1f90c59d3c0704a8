use nalgebra::Point3;

use super::mesh::TriangleMesh;

pub const DEFAULT_SMOOTH_ITERATIONS: usize = 10;
pub const DEFAULT_SMOOTH_LAMBDA: f64 = 0.5;

/// Jacobi Laplacian smoothing. Each pass moves every vertex a fraction
/// `lambda` toward the centroid of its closed 1-ring (the vertex together with
/// its edge neighbors). Connectivity is untouched; unreferenced vertices stay
/// where they are.
pub fn laplacian_smooth(mesh: &TriangleMesh, iterations: usize, lambda: f64) -> TriangleMesh {
    let mut out = mesh.clone();
    if iterations == 0 {
        return out;
    }
    let lambda = lambda.clamp(0.0, 1.0);
    let neighbors = mesh.vertex_neighbors();
    let mut next = out.vertices.clone();
    for _ in 0..iterations {
        for (i, nb) in neighbors.iter().enumerate() {
            if nb.is_empty() {
                continue;
            }
            let mut sum = out.vertices[i].coords;
            for &j in nb {
                sum += out.vertices[j as usize].coords;
            }
            let centroid = sum / (nb.len() + 1) as f64;
            let p = out.vertices[i].coords;
            next[i] = Point3::from(p + (centroid - p) * lambda);
        }
        std::mem::swap(&mut out.vertices, &mut next);
        next.copy_from_slice(&out.vertices);
    }
    if out.normals.is_some() {
        out.compute_normals();
    }
    out
}
