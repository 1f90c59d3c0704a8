//! Scores a perturbed trajectory and a scaled depth map against ground truth.

use bronchosim::eval::{depth_metrics, format_depth_table, format_pose_table, median_scale_align, pose_metrics, DepthEvalPair, PoseMetricOptions, PoseSet};
use bronchosim::render::Raster;
use nalgebra::{Isometry3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let gt: Vec<Isometry3<f64>> = (0..20)
        .map(|k| Isometry3::new(Vector3::new(0.0005 * k as f64, 0.0, 0.002 * k as f64), Vector3::new(0.0, 0.02 * k as f64, 0.01 * k as f64)))
        .collect();
    let mut noise = |s: f64| Vector3::new(rng.gen_range(-s..s), rng.gen_range(-s..s), rng.gen_range(-s..s));
    let pred: Vec<Isometry3<f64>> = gt.iter().map(|p| p * Isometry3::new(noise(2e-4), noise(0.03))).collect();
    let opts = PoseMetricOptions::default();
    let m = pose_metrics(&PoseSet::sequential(pred)?, &PoseSet::sequential(gt)?, &opts)?;
    println!("{}", format_pose_table("jittered trajectory", &m, &opts));

    let (w, h) = (64, 48);
    let gt = Raster::from_vec(w, h, (0..w * h).map(|i| 0.005 + 0.03 * (i % w) as f64 / w as f64).collect())?;
    let pred = gt.map(|d| 1.3 * d);
    println!("{}", format_depth_table("pred = 1.3 x gt", &depth_metrics(&DepthEvalPair::new(pred.clone(), gt.clone())?)));
    let (aligned, scale) = median_scale_align(&pred, &gt, &gt.map(|d| d.is_finite()))?;
    println!("median scale {scale:.4}");
    println!("{}", format_depth_table("median-aligned", &depth_metrics(&DepthEvalPair::new(aligned, gt)?)));
    Ok(())
}
