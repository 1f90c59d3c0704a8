use std::collections::HashMap;

use nalgebra::Point3;

use super::grid::VoxelMask;
use super::mc_tables::TRI_TABLE;
use super::mesh::TriangleMesh;
use crate::error::GeometryError;

/// Corner offsets in table order.
const CORNERS: [[i64; 3]; 8] = [
    [0, 0, 0],
    [1, 0, 0],
    [1, 1, 0],
    [0, 1, 0],
    [0, 0, 1],
    [1, 0, 1],
    [1, 1, 1],
    [0, 1, 1],
];

const EDGES: [[usize; 2]; 12] = [
    [0, 1],
    [1, 2],
    [2, 3],
    [3, 0],
    [4, 5],
    [5, 6],
    [6, 7],
    [7, 4],
    [0, 4],
    [1, 5],
    [2, 6],
    [3, 7],
];

/// Extracts the boundary between occupied and empty voxels.
///
/// Voxel centers are the lattice samples (1 inside, 0 outside). The volume is
/// treated as surrounded by empty voxels, so the output is closed even when
/// occupancy touches the grid boundary. Vertices are placed by linear
/// interpolation of the binary samples, which is the edge midpoint at
/// `iso = 0.5`. Triangles are wound counter-clockwise seen from outside.
pub fn marching_cubes(mask: &VoxelMask, iso: f64) -> Result<TriangleMesh, GeometryError> {
    if !(iso > 0.0 && iso < 1.0) {
        return Err(GeometryError::InvalidGrid(format!("iso {iso} must lie in (0, 1)")));
    }
    let occupied = mask.count();
    if occupied == 0 || occupied == mask.occupancy.len() {
        return Err(GeometryError::NoIsosurface);
    }
    let g = &mask.grid;
    let [nx, ny, nz] = g.dims.map(|d| d as i64);
    let sample = |i: i64, j: i64, k: i64| -> f64 {
        if i < 0 || j < 0 || k < 0 || i >= nx || j >= ny || k >= nz {
            0.0
        } else if mask.get(i as usize, j as usize, k as usize) {
            1.0
        } else {
            0.0
        }
    };
    let position = |i: i64, j: i64, k: i64| -> Point3<f64> {
        Point3::new(
            g.origin[0] + i as f64 * g.spacing[0],
            g.origin[1] + j as f64 * g.spacing[1],
            g.origin[2] + k as f64 * g.spacing[2],
        )
    };

    let mut vertices: Vec<Point3<f64>> = Vec::new();
    let mut triangles: Vec<[u32; 3]> = Vec::new();
    // Keyed by the lower lattice corner of the edge and its axis.
    let mut edge_vertex: HashMap<(i64, i64, i64, u8), u32> = HashMap::new();

    for k in -1..nz {
        for j in -1..ny {
            for i in -1..nx {
                let mut values = [0.0; 8];
                let mut case = 0usize;
                for (c, off) in CORNERS.iter().enumerate() {
                    values[c] = sample(i + off[0], j + off[1], k + off[2]);
                    if values[c] < iso {
                        case |= 1 << c;
                    }
                }
                if case == 0 || case == 255 {
                    continue;
                }
                let row = &TRI_TABLE[case];
                let mut e = 0;
                while e < 16 && row[e] >= 0 {
                    let mut tri = [0u32; 3];
                    for (slot, &edge) in row[e..e + 3].iter().enumerate() {
                        let [a, b] = EDGES[edge as usize];
                        let (ca, cb) = (CORNERS[a], CORNERS[b]);
                        let axis = (0..3).find(|&ax| ca[ax] != cb[ax]).unwrap() as u8;
                        let lo = if ca[axis as usize] < cb[axis as usize] { ca } else { cb };
                        let key = (i + lo[0], j + lo[1], k + lo[2], axis);
                        tri[slot] = *edge_vertex.entry(key).or_insert_with(|| {
                            let pa = position(i + ca[0], j + ca[1], k + ca[2]);
                            let pb = position(i + cb[0], j + cb[1], k + cb[2]);
                            let (va, vb) = (values[a], values[b]);
                            let t = ((iso - va) / (vb - va)).clamp(0.0, 1.0);
                            vertices.push(pa + (pb - pa) * t);
                            (vertices.len() - 1) as u32
                        });
                    }
                    triangles.push(tri);
                    e += 3;
                }
            }
        }
    }

    let mut mesh = TriangleMesh::new(vertices, triangles);
    mesh.remove_degenerate();
    if mesh.is_empty() {
        return Err(GeometryError::NoIsosurface);
    }
    if mesh.signed_volume() < 0.0 {
        mesh.flip_orientation();
    }
    Ok(mesh)
}
