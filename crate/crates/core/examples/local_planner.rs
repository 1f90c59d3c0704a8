//! Plans a collision-free path toward the farthest visible point of a
//! rendered cylinder view and writes the sphere overlay as PLY.

use bronchosim::anatomy::{build_from_mask, AnatomyOptions};
use bronchosim::phantom::{CylinderPhantom, Phantom};
use bronchosim::planner::{farthest_visible_point, free_goal, plan_local_path, LocalMap, PlannerParams};
use bronchosim::render::{backproject_pointcloud, render_geometry, CameraIntrinsics};
use bronchosim::robot::RobotParams;
use nalgebra::{Isometry3, Point3};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let anatomy = build_from_mask(&Phantom::Cylinder(CylinderPhantom::default()).mask(0.5e-3, 2)?, &AnatomyOptions::default())?;
    let bvh = anatomy.bvh();
    let cam = CameraIntrinsics::with_fov(160, 90.0);
    let pose = Isometry3::translation(0.0008, -0.0005, 0.004);
    let (depth, _) = render_geometry(&bvh, &pose, &cam, 1.0);

    let cloud = backproject_pointcloud(&depth, None, &cam, None, 2);
    let map = LocalMap::from_cloud(&cloud, RobotParams::default().tip_radius)?;
    let goal = farthest_visible_point(&depth, &cam)?;
    let target = free_goal(&map, &Point3::origin(), &goal).ok_or("no free target along the view ray")?;
    let path = plan_local_path(&map, &Point3::origin(), &target, &PlannerParams::default())?;
    println!("cloud {} points, goal {:.1} mm ahead, target {:.1} mm", cloud.len(), goal.z * 1e3, target.z * 1e3);
    println!(
        "path: {} vertices, {:.2} mm long, {} spheres, min clearance {:.2} mm (radius {:.2} mm), found at iteration {}",
        path.vertices.len(),
        path.length * 1e3,
        path.spheres.len(),
        path.min_clearance(&map) * 1e3,
        map.robot_radius() * 1e3,
        path.iterations
    );
    let overlay = path.overlay(24);
    let out = std::env::temp_dir().join("bronchosim_plan.ply");
    std::fs::write(&out, bronchosim::dataset::formats::encode_cloud(&overlay))?;
    println!("overlay: {} points -> {}", overlay.len(), out.display());
    Ok(())
}
