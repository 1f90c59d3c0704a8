//! Ground-truth optical flow from depth and relative camera motion.

use nalgebra::{Isometry3, Point2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::camera::CameraIntrinsics;
use super::raster::Raster;

/// Depth agreement required by the occlusion test, m.
pub const OCCLUSION_EPS: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowField {
    /// Displacement (dx, dy) in pixels from frame t to frame t+1.
    pub flow: Raster<[f64; 2]>,
    pub valid: Raster<bool>,
}

impl FlowField {
    pub fn valid_count(&self) -> usize {
        self.valid.data.iter().filter(|&&v| v).count()
    }
}

/// Depth at continuous pixel coordinates, interpolating inverse depth
/// bilinearly (exact for planar patches).
pub fn interpolate_depth(depth: &Raster<f64>, q: &Point2<f64>) -> Option<f64> {
    let (w, h) = depth.dims();
    if !(q.x >= 0.0 && q.y >= 0.0) || q.x > (w - 1) as f64 || q.y > (h - 1) as f64 {
        return None;
    }
    let (u0, v0) = (q.x.floor() as usize, q.y.floor() as usize);
    let (u1, v1) = ((u0 + 1).min(w - 1), (v0 + 1).min(h - 1));
    let (fx, fy) = (q.x - u0 as f64, q.y - v0 as f64);
    let tap = |u, v| {
        let d = *depth.get(u, v);
        (d.is_finite() && d > 0.0).then(|| 1.0 / d)
    };
    let (a, b, c, d) = (tap(u0, v0)?, tap(u1, v0)?, tap(u0, v1)?, tap(u1, v1)?);
    let inv = (a * (1.0 - fx) + b * fx) * (1.0 - fy) + (c * (1.0 - fx) + d * fx) * fy;
    (inv > 0.0).then(|| 1.0 / inv)
}

/// Flow of every pixel of frame t: backproject with `depth_t`, move into
/// frame t+1 by `pose_t1⁻¹ ∘ pose_t`, reproject. Pixels without depth or
/// leaving the image are invalid; with `depth_t1`, pixels whose reprojected
/// depth disagrees by more than [`OCCLUSION_EPS`] are marked occluded.
pub fn compute_optical_flow(
    depth_t: &Raster<f64>,
    pose_t: &Isometry3<f64>,
    pose_t1: &Isometry3<f64>,
    cam: &CameraIntrinsics,
    depth_t1: Option<&Raster<f64>>,
) -> FlowField {
    let (w, h) = depth_t.dims();
    let rel = pose_t1.inverse() * pose_t;
    let still = pose_t == pose_t1;
    let mut flow = Raster::filled(w, h, [0.0; 2]);
    let mut valid = Raster::filled(w, h, false);
    flow.data
        .par_chunks_mut(w)
        .zip(valid.data.par_chunks_mut(w))
        .enumerate()
        .for_each(|(v, (frow, vrow))| {
            for u in 0..w {
                let d = *depth_t.get(u, v);
                if !(d.is_finite() && d > 0.0) {
                    continue;
                }
                let (q, z1) = if still {
                    (Point2::new(u as f64, v as f64), d)
                } else {
                    let p1 = rel * cam.backproject(u as f64, v as f64, d);
                    let Some(q) = cam.project(&p1) else {
                        continue;
                    };
                    (q, p1.z)
                };
                if !cam.in_image(&q) {
                    continue;
                }
                if let Some(d1) = depth_t1 {
                    match interpolate_depth(d1, &q) {
                        Some(z) if (z - z1).abs() <= OCCLUSION_EPS => {}
                        _ => continue,
                    }
                }
                if !still {
                    frow[u] = [q.x - u as f64, q.y - v as f64];
                }
                vrow[u] = true;
            }
        });
    FlowField { flow, valid }
}

/// Samples `image_t1` at `p + flow(p)` to reconstruct frame t on valid pixels.
pub fn warp_backward(image_t1: &Raster<[f64; 3]>, flow: &FlowField) -> Raster<Option<[f64; 3]>> {
    let (w, h) = image_t1.dims();
    let channels: Vec<Raster<f64>> = (0..3).map(|c| image_t1.map(|p| p[c])).collect();
    let mut out = Raster::filled(w, h, None);
    for v in 0..h {
        for u in 0..w {
            if !*flow.valid.get(u, v) {
                continue;
            }
            let f = flow.flow.get(u, v);
            let (x, y) = (u as f64 + f[0], v as f64 + f[1]);
            let px = [channels[0].bilinear(x, y), channels[1].bilinear(x, y), channels[2].bilinear(x, y)];
            if let [Some(r), Some(g), Some(b)] = px {
                out.set(u, v, Some([r, g, b]));
            }
        }
    }
    out
}
