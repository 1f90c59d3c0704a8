//! Renders one frame from inside the cylinder phantom and reports pass
//! timings and depth statistics.

use std::time::Instant;

use bronchosim::anatomy::{build_from_mask, AnatomyOptions};
use bronchosim::phantom::{CylinderPhantom, Phantom};
use bronchosim::render::{render_frame, render_geometry, CameraIntrinsics, Material, RenderSettings, Scene};

fn main() -> bronchosim::Result<()> {
    env_logger::init();
    let mask = Phantom::Cylinder(CylinderPhantom::default()).mask(0.5e-3, 2)?;
    let anatomy = build_from_mask(&mask, &AnatomyOptions::default())?;
    let bvh = anatomy.bvh();
    let cam = CameraIntrinsics::default();
    let seq = &anatomy.sequences[0];
    let pose = seq.waypoints[seq.len() / 4].pose;
    println!("mesh: {} triangles, {} waypoints", anatomy.mesh.triangles.len(), seq.len());

    let t = Instant::now();
    let (depth, _) = render_geometry(&bvh, &pose, &cam, 1.0);
    let geo = t.elapsed().as_secs_f64();
    println!("depth+normal pass: {:.3} s ({:.1} frames/s on {} threads)", geo, 1.0 / geo, rayon::current_num_threads());

    let scene = Scene {
        bvh: &bvh,
        material: Material::default(),
    };
    let t = Instant::now();
    let frame = render_frame(&scene, &pose, &cam, &RenderSettings::default(), 0.0)?;
    println!("full frame (spp 4): {:.3} s", t.elapsed().as_secs_f64());

    let valid: Vec<f64> = depth.data.iter().copied().filter(|d| d.is_finite()).collect();
    let in_range = valid.iter().filter(|d| (0.002..=0.050).contains(*d)).count();
    let (lo, hi) = valid.iter().fold((f64::MAX, 0.0f64), |(a, b), &d| (a.min(d), b.max(d)));
    println!(
        "depth: {} valid px, {:.1}% in [2, 50] mm, range {:.2}..{:.2} mm",
        valid.len(),
        100.0 * in_range as f64 / valid.len() as f64,
        lo * 1e3,
        hi * 1e3
    );
    let center = frame.rgb.get(300, 300);
    let edge = frame.rgb.get(10, 300);
    println!("rgb center {center:?} edge {edge:?}");
    Ok(())
}
