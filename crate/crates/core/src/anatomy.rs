//! Mask-to-waypoints chain: surface extraction, smoothing, distance field,
//! medial axis, centerline graph and waypoint sequences.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::sdf::{SdfOptions, DEFAULT_PADDING, DEFAULT_VOXEL_SIZE};
use crate::geometry::smooth::{DEFAULT_SMOOTH_ITERATIONS, DEFAULT_SMOOTH_LAMBDA};
use crate::geometry::{laplacian_smooth, marching_cubes, Bvh, SdfGrid, TriangleMesh, VoxelMask};
use crate::skeleton::graph::DEFAULT_PRUNE_LENGTH;
use crate::skeleton::{
    build_centerline_graph, extract_medial_axis, sample_waypoints, MedialOptions, MedialPointSet, SkeletonGraph,
    WaypointOptions, WaypointSequence,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnatomyOptions {
    pub iso: f64,
    pub smooth_iterations: usize,
    pub smooth_lambda: f64,
    pub voxel_size: f64,
    pub sdf_padding: usize,
    pub surface_samples: usize,
    pub prune_length: f64,
    pub waypoints: WaypointOptions,
    pub seed: u64,
}

impl Default for AnatomyOptions {
    fn default() -> Self {
        Self {
            iso: 0.5,
            smooth_iterations: DEFAULT_SMOOTH_ITERATIONS,
            smooth_lambda: DEFAULT_SMOOTH_LAMBDA,
            voxel_size: DEFAULT_VOXEL_SIZE,
            sdf_padding: DEFAULT_PADDING,
            surface_samples: crate::skeleton::medial::DEFAULT_SURFACE_SAMPLES,
            prune_length: DEFAULT_PRUNE_LENGTH,
            waypoints: WaypointOptions::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Anatomy {
    pub mesh: TriangleMesh,
    pub sdf: SdfGrid,
    pub medial: MedialPointSet,
    pub graph: SkeletonGraph,
    pub sequences: Vec<WaypointSequence>,
}

impl Anatomy {
    pub fn bvh(&self) -> Bvh {
        Bvh::build(&self.mesh)
    }
}

/// Extracts and smooths the lumen surface of a mask.
pub fn surface_from_mask(mask: &VoxelMask, opts: &AnatomyOptions) -> Result<TriangleMesh> {
    let raw = marching_cubes(mask, opts.iso)?;
    let mut mesh = laplacian_smooth(&raw, opts.smooth_iterations, opts.smooth_lambda);
    mesh.compute_normals();
    Ok(mesh)
}

pub fn build_from_mask(mask: &VoxelMask, opts: &AnatomyOptions) -> Result<Anatomy> {
    let mesh = surface_from_mask(mask, opts)?;
    build_from_mesh(mesh, opts)
}

pub fn build_from_mesh(mut mesh: TriangleMesh, opts: &AnatomyOptions) -> Result<Anatomy> {
    mesh.ensure_normals();
    let sdf = distance_field(&mesh, opts)?;
    let Skeleton { medial, graph, sequences } = skeletonize(&mesh, &sdf, opts)?;
    Ok(Anatomy {
        mesh,
        sdf,
        medial,
        graph,
        sequences,
    })
}

pub fn distance_field(mesh: &TriangleMesh, opts: &AnatomyOptions) -> Result<SdfGrid> {
    Ok(SdfGrid::from_mesh(
        mesh,
        &SdfOptions {
            voxel_size: opts.voxel_size,
            padding: opts.sdf_padding,
            unsigned_fallback: false,
        },
    )?)
}

#[derive(Debug, Clone)]
pub struct Skeleton {
    pub medial: MedialPointSet,
    pub graph: SkeletonGraph,
    pub sequences: Vec<WaypointSequence>,
}

/// Medial axis, centerline graph and root-to-leaf waypoint sequences.
pub fn skeletonize(mesh: &TriangleMesh, sdf: &SdfGrid, opts: &AnatomyOptions) -> Result<Skeleton> {
    let medial = extract_medial_axis(
        sdf,
        mesh,
        &MedialOptions {
            n_surface_samples: opts.surface_samples,
            seed: opts.seed,
            ..Default::default()
        },
    )?;
    let graph = build_centerline_graph(&medial, opts.prune_length)?;
    let sequences = sample_waypoints(&graph, &opts.waypoints)?;
    Ok(Skeleton { medial, graph, sequences })
}
