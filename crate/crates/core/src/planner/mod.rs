//! Local navigation toward the farthest visible point: cross-entropy
//! optimization of polylines against sphere collision bodies.

pub mod map;

use nalgebra::{Point3, Vector3};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::PlannerError;
use crate::render::{CameraIntrinsics, CloudFrame, PointCloud, Raster};
use crate::rng;

pub use map::LocalMap;

/// Fraction of the deepest valid pixels averaged into the goal.
pub const GOAL_QUANTILE: f64 = 0.01;

/// Camera-frame goal: centroid of the backprojected pixels whose depth is
/// at least the depth of the top-1% pixel. Ties at that depth are included.
pub fn farthest_visible_point(depth: &Raster<f64>, cam: &CameraIntrinsics) -> Result<Point3<f64>, PlannerError> {
    let mut valid: Vec<f64> = depth.data.iter().copied().filter(|d| d.is_finite() && *d > 0.0).collect();
    if valid.is_empty() {
        return Err(PlannerError::NoValidDepth);
    }
    let k = ((valid.len() as f64 * GOAL_QUANTILE).ceil() as usize).max(1);
    let (_, &mut threshold, _) = valid.select_nth_unstable_by(k - 1, |a, b| b.total_cmp(a));
    let mut sum = Vector3::zeros();
    let mut n = 0.0;
    for v in 0..depth.height {
        for u in 0..depth.width {
            let d = *depth.get(u, v);
            if d.is_finite() && d >= threshold {
                sum += cam.backproject(u as f64, v as f64, d).coords;
                n += 1.0;
            }
        }
    }
    Ok(Point3::from(sum / n))
}

/// Backs `goal` off toward `start` until a robot sphere there is free. A
/// surface point seen by the camera is never itself reachable.
pub fn free_goal(map: &LocalMap, start: &Point3<f64>, goal: &Point3<f64>) -> Option<Point3<f64>> {
    let d = start - goal;
    let len = d.norm();
    let step = map.robot_radius() / 4.0;
    let n = (len / step).ceil() as usize;
    (0..=n).map(|k| goal + d * ((k as f64 * step).min(len) / len.max(f64::MIN_POSITIVE))).find(|p| map.is_free(p))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerParams {
    /// Candidates per iteration.
    pub samples: usize,
    /// Free interior vertices between start and goal.
    pub control_points: usize,
    pub iterations: usize,
    pub elite_fraction: f64,
    /// Weight of summed sphere penetration (m) against path length (m).
    pub barrier_weight: f64,
    /// Initial perturbation as a fraction of the start-goal distance.
    pub initial_sigma: f64,
    /// Blend of the elite statistics into the sampling distribution.
    pub smoothing: f64,
    pub seed: u64,
}

impl Default for PlannerParams {
    fn default() -> Self {
        Self {
            samples: 64,
            control_points: 8,
            iterations: 50,
            elite_fraction: 0.125,
            barrier_weight: 100.0,
            initial_sigma: 0.25,
            smoothing: 0.8,
            seed: 0,
        }
    }
}

impl PlannerParams {
    pub fn validate(&self) -> Result<(), PlannerError> {
        if self.samples < 2 || self.iterations == 0 {
            return Err(PlannerError::InvalidParam("need at least 2 samples and 1 iteration".into()));
        }
        if !(self.elite_fraction > 0.0 && self.elite_fraction <= 1.0) {
            return Err(PlannerError::InvalidParam(format!("elite fraction {} outside (0, 1]", self.elite_fraction)));
        }
        if !(self.barrier_weight > 0.0 && self.initial_sigma >= 0.0 && (0.0..=1.0).contains(&self.smoothing)) {
            return Err(PlannerError::InvalidParam("barrier weight, sigma or smoothing out of range".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedPath {
    /// Start, interior control points, goal.
    pub vertices: Vec<Point3<f64>>,
    /// Collision-sphere centers spaced at most half a radius apart.
    pub spheres: Vec<Point3<f64>>,
    pub robot_radius: f64,
    pub length: f64,
    pub cost: f64,
    pub iterations: usize,
}

impl PlannedPath {
    /// Exhaustive minimum distance from any sphere center to the cloud.
    pub fn min_clearance(&self, map: &LocalMap) -> f64 {
        self.spheres.iter().map(|s| map.brute_force_clearance(s)).fold(f64::INFINITY, f64::min)
    }

    /// Path vertices (red) and points on each collision sphere (green) for
    /// viewing in standard point-cloud tools.
    pub fn overlay(&self, points_per_sphere: usize) -> PointCloud {
        let mut points = self.vertices.clone();
        let mut colors = vec![[255, 0, 0]; points.len()];
        let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
        let n = points_per_sphere.max(1);
        for c in &self.spheres {
            for k in 0..n {
                let z = 1.0 - 2.0 * (k as f64 + 0.5) / n as f64;
                let r = (1.0 - z * z).sqrt();
                let phi = golden * k as f64;
                points.push(c + Vector3::new(r * phi.cos(), r * phi.sin(), z) * self.robot_radius);
                colors.push([0, 255, 0]);
            }
        }
        PointCloud {
            points,
            colors,
            frame: CloudFrame::Camera,
        }
    }
}

pub fn polyline_length(vertices: &[Point3<f64>]) -> f64 {
    vertices.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
}

/// Sphere centers along the polyline at spacing ≤ `radius / 2`, including
/// every vertex.
pub fn sphere_centers(vertices: &[Point3<f64>], radius: f64) -> Vec<Point3<f64>> {
    let step = radius / 2.0;
    let mut out = vec![vertices[0]];
    for w in vertices.windows(2) {
        let d = w[1] - w[0];
        let n = ((d.norm() / step).ceil() as usize).max(1);
        for k in 1..=n {
            out.push(w[0] + d * (k as f64 / n as f64));
        }
    }
    out
}

struct Evaluated {
    cost: f64,
    length: f64,
    feasible: bool,
}

fn evaluate(map: &LocalMap, vertices: &[Point3<f64>], weight: f64) -> Evaluated {
    let length = polyline_length(vertices);
    let penetration: f64 = sphere_centers(vertices, map.robot_radius()).iter().map(|c| map.penetration(c)).sum();
    Evaluated {
        cost: length + weight * penetration,
        length,
        feasible: penetration == 0.0,
    }
}

fn assemble(start: &Point3<f64>, goal: &Point3<f64>, interior: &[Vector3<f64>]) -> Vec<Point3<f64>> {
    let mut v = Vec::with_capacity(interior.len() + 2);
    v.push(*start);
    v.extend(interior.iter().map(|c| Point3::from(*c)));
    v.push(*goal);
    v
}

/// Cross-entropy search over the interior vertices. The first candidate of
/// every iteration is the current mean, so the straight segment is always
/// evaluated and the result never costs more than a feasible straight line.
pub fn plan_local_path(map: &LocalMap, start: &Point3<f64>, goal: &Point3<f64>, params: &PlannerParams) -> Result<PlannedPath, PlannerError> {
    params.validate()?;
    if !map.is_free(start) {
        return Err(PlannerError::StartInCollision);
    }
    let m = params.control_points;
    let span = goal - start;
    let mut mean: Vec<Vector3<f64>> = (1..=m).map(|k| start.coords + span * (k as f64 / (m + 1) as f64)).collect();
    let floor = map.robot_radius() * 0.05;
    let mut sigma = vec![(span.norm() * params.initial_sigma).max(floor); m];
    let elite = ((params.samples as f64 * params.elite_fraction).round() as usize).clamp(1, params.samples);

    let mut best_feasible: Option<(f64, f64, Vec<Point3<f64>>, usize)> = None;
    let mut best_cost = f64::INFINITY;
    for it in 0..params.iterations {
        let mut rng = rng::keyed(params.seed, rng::PLANNER, it as u64);
        let candidates: Vec<Vec<Vector3<f64>>> = (0..params.samples)
            .map(|s| {
                if s == 0 {
                    return mean.clone();
                }
                mean.iter()
                    .zip(&sigma)
                    .map(|(mu, &sd)| {
                        let z = Vector3::from_fn(|_, _| StandardNormal.sample(&mut rng));
                        mu + z * sd
                    })
                    .collect()
            })
            .collect();
        let scores: Vec<Evaluated> = candidates
            .par_iter()
            .map(|c| evaluate(map, &assemble(start, goal, c), params.barrier_weight))
            .collect();

        let mut order: Vec<usize> = (0..candidates.len()).collect();
        order.sort_by(|&a, &b| scores[a].cost.total_cmp(&scores[b].cost).then(a.cmp(&b)));
        for &i in &order {
            best_cost = best_cost.min(scores[i].cost);
            if scores[i].feasible && best_feasible.as_ref().map_or(true, |b| scores[i].cost < b.0) {
                best_feasible = Some((scores[i].cost, scores[i].length, assemble(start, goal, &candidates[i]), it + 1));
            }
        }

        let elites = &order[..elite];
        for k in 0..m {
            let mu: Vector3<f64> = elites.iter().map(|&i| candidates[i][k]).sum::<Vector3<f64>>() / elite as f64;
            let var: f64 = elites.iter().map(|&i| (candidates[i][k] - mu).norm_squared()).sum::<f64>() / (3.0 * elite as f64);
            mean[k] = mean[k] * (1.0 - params.smoothing) + mu * params.smoothing;
            sigma[k] = (sigma[k] * (1.0 - params.smoothing) + var.sqrt() * params.smoothing).max(floor);
        }
    }

    match best_feasible {
        Some((cost, length, vertices, iterations)) => Ok(PlannedPath {
            spheres: sphere_centers(&vertices, map.robot_radius()),
            vertices,
            robot_radius: map.robot_radius(),
            length,
            cost,
            iterations,
        }),
        None => Err(PlannerError::NoFeasiblePath {
            iterations: params.iterations,
            best_cost,
        }),
    }
}
