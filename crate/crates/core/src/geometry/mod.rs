//! Mesh ingestion and post-processing, signed distance fields and BVH ray
//! queries.

pub mod bvh;
pub mod grid;
pub mod marching_cubes;
mod mc_tables;
pub mod mesh;
pub mod mesh_io;
pub mod primitives;
pub mod sdf;
pub mod smooth;

pub use bvh::{Bvh, RayHit};
pub use grid::{GridSpec, VoxelMask};
pub use marching_cubes::marching_cubes;
pub use mesh::{Aabb, TriangleMesh};
pub use mesh_io::{load_mesh, load_mesh_with_report, write_obj};
pub use sdf::SdfGrid;
pub use smooth::laplacian_smooth;
