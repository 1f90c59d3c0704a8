//! Skeletonizes the cylinder and Y phantoms and prints graph statistics.

use std::time::Instant;

use bronchosim::geometry::sdf::SdfOptions;
use bronchosim::geometry::{laplacian_smooth, marching_cubes, SdfGrid};
use bronchosim::phantom::{CylinderPhantom, Phantom, YPhantom};
use bronchosim::skeleton::graph::DEFAULT_PRUNE_LENGTH;
use bronchosim::skeleton::{build_centerline_graph, extract_medial_axis, MedialOptions, NodeKind};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let voxel = 0.5e-3;
    for phantom in [Phantom::Cylinder(CylinderPhantom::default()), Phantom::Y(YPhantom::default())] {
        let t0 = Instant::now();
        let mask = phantom.mask(voxel, 2)?;
        let mesh = laplacian_smooth(&marching_cubes(&mask, 0.5)?, 10, 0.5);
        let t1 = Instant::now();
        let sdf = SdfGrid::from_mesh(
            &mesh,
            &SdfOptions {
                voxel_size: voxel,
                padding: 3,
                unsigned_fallback: false,
            },
        )?;
        let t2 = Instant::now();
        let medial = extract_medial_axis(&sdf, &mesh, &MedialOptions::default())?;
        let t3 = Instant::now();
        let graph = build_centerline_graph(&medial, DEFAULT_PRUNE_LENGTH)?;
        let worst = medial.points.iter().map(|p| phantom.axis_distance(p)).fold(0.0, f64::max);
        println!(
            "{:?}: {} tris, sdf {:?}, {} medial pts ({} dropped), max axis dev {:.3} mm",
            phantom_name(&phantom),
            mesh.triangles.len(),
            sdf.grid.dims,
            medial.len(),
            medial.dropped,
            worst * 1e3
        );
        println!(
            "  branches {} endpoints {} bifurcations {} | mesh {:.2}s sdf {:.2}s medial {:.2}s total {:.2}s",
            graph.branches.len(),
            graph.count(NodeKind::Endpoint),
            graph.count(NodeKind::Bifurcation),
            (t1 - t0).as_secs_f64(),
            (t2 - t1).as_secs_f64(),
            (t3 - t2).as_secs_f64(),
            t0.elapsed().as_secs_f64()
        );
    }
    Ok(())
}

fn phantom_name(p: &Phantom) -> &'static str {
    match p {
        Phantom::Cylinder(_) => "cylinder",
        Phantom::Y(_) => "y",
    }
}
