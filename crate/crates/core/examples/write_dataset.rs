//! Tracks the cylinder centerline, renders every modality and writes a
//! dataset sequence, then reads it back and validates it.

use bronchosim::anatomy::{build_from_mask, AnatomyOptions};
use bronchosim::dataset::{quantize_bundle, read_sequence, write_frame, write_metadata, write_room_manifest, SequenceLayout, Trajectory};
use bronchosim::phantom::{CylinderPhantom, Phantom};
use bronchosim::render::{backproject_pointcloud, compute_optical_flow, render_frame, CameraIntrinsics, Material, RenderSettings, Scene};
use bronchosim::robot::{track_waypoints, RobotParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = std::env::args().nth(1).map(Into::into).unwrap_or_else(|| std::env::temp_dir().join("bronchosim_dataset"));
    let anatomy = build_from_mask(&Phantom::Cylinder(CylinderPhantom::default()).mask(0.5e-3, 2)?, &AnatomyOptions::default())?;
    let params = RobotParams::default();
    let log = track_waypoints(&anatomy.sequences[0], &anatomy.sdf, &params, 5)?;
    let bvh = anatomy.bvh();
    let scene = Scene {
        bvh: &bvh,
        material: Material::default(),
    };
    let cam = CameraIntrinsics::with_fov(96, 90.0);
    let settings = RenderSettings { spp: 1, ..Default::default() };
    let frames: Vec<_> = log
        .entries
        .iter()
        .map(|e| render_frame(&scene, &e.pose, &cam, &settings, e.t_sec))
        .collect::<Result<_, _>>()?;

    let layout = SequenceLayout::new(&root, "patient_000", "seq_000")?;
    for (k, frame) in frames.iter().enumerate() {
        let mut b = frame.clone();
        if let Some(next) = frames.get(k + 1) {
            b.flow = Some(compute_optical_flow(&b.depth, &b.pose, &next.pose, &cam, Some(&next.depth)));
        }
        b.cloud = Some(backproject_pointcloud(&b.depth, Some(&b.rgb), &cam, None, 2));
        write_frame(&layout, k, &quantize_bundle(&b), true)?;
    }
    write_metadata(&layout, &Trajectory::from_log(&log), &cam, &params)?;
    let manifest = write_room_manifest(&root)?;

    let seq = read_sequence(&layout.dir())?;
    let last = seq.frame(seq.len() - 1)?;
    println!("wrote {} frames to {}", seq.len(), layout.dir().display());
    println!("room manifest lists {} patient(s); last frame has flow: {}", manifest.patients.len(), last.flow.is_some());
    println!("first pose translation (m): {:?}", seq.poses[0].translation.vector.as_slice());
    Ok(())
}
