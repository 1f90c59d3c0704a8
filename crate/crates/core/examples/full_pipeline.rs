//! Runs every stage on the Y phantom at a small resolution and prints the
//! run report.

use bronchosim::phantom::{Phantom, YPhantom};
use bronchosim::pipeline::{run_pipeline, InputSource, PipelineConfig};
use bronchosim::render::CameraIntrinsics;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::init();
    let out = std::env::args().nth(1).map(Into::into).unwrap_or_else(|| std::env::temp_dir().join("bronchosim_run"));
    let mut config = PipelineConfig::new(
        InputSource::Phantom {
            shape: Phantom::Y(YPhantom::default()),
            voxel_size: 0.5e-3,
        },
        &out,
        Some(1),
    );
    config.camera = CameraIntrinsics::with_fov(128, 90.0);
    config.render.spp = 1;
    config.max_frames = Some(20);
    config.overwrite = true;
    let report = run_pipeline(&config)?;
    for s in &report.stages {
        println!("{:<12} {:?} {:>7.2} s {:?}", s.stage.name(), s.status, s.seconds, s.counts);
    }
    for s in &report.sequences {
        println!(
            "{}: {} frames, mean tip error {:.3} mm, {:.1}% depth in working range",
            s.name,
            s.frames,
            s.mean_tip_error * 1e3,
            100.0 * s.depth_in_range_fraction()
        );
    }
    println!("output: {}", out.display());
    Ok(())
}
