//! Adaptive 6-DoF waypoint sampling along root-to-leaf centerline paths.

use nalgebra::{Isometry3, Matrix3, Point3, Rotation3, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::graph::{NodeKind, SkeletonGraph};
use crate::error::SkeletonError;

pub const TIMESTEP: f64 = 0.1;
/// Fine resampling step as a fraction of the base spacing.
const RESAMPLE_DIVISIONS: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaypointOptions {
    pub base_spacing: f64,
    /// Length scale multiplying |κ|.
    pub curvature_gain: f64,
    pub bifurcation_gain: f64,
    /// Decay length of the bifurcation term.
    pub tau: f64,
    /// Half-width of the moving-average filter applied to the centerline.
    pub smoothing: f64,
}

impl Default for WaypointOptions {
    fn default() -> Self {
        Self {
            base_spacing: 1e-3,
            curvature_gain: 2e-3,
            bifurcation_gain: 2.0,
            tau: 5e-3,
            smoothing: 2e-3,
        }
    }
}

impl WaypointOptions {
    /// Local arclength spacing for curvature `kappa` at distance `d_bif`
    /// from the nearest bifurcation.
    pub fn spacing(&self, kappa: f64, d_bif: f64) -> f64 {
        self.base_spacing / (1.0 + self.curvature_gain * kappa.abs() + self.bifurcation_gain * (-d_bif / self.tau).exp())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    /// World-from-camera; camera z is the path tangent.
    pub pose: Isometry3<f64>,
    pub timestamp: f64,
    /// Unsigned curvature, 1/m.
    pub curvature: f64,
    pub branch: usize,
    /// Arclength from the root along the smoothed path.
    pub arclength: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaypointSequence {
    /// Graph node the path ends at.
    pub endpoint: usize,
    pub waypoints: Vec<Waypoint>,
}

impl WaypointSequence {
    pub fn len(&self) -> usize {
        self.waypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.waypoints.is_empty()
    }

    pub fn positions(&self) -> Vec<Point3<f64>> {
        self.waypoints.iter().map(|w| Point3::from(w.pose.translation.vector)).collect()
    }
}

/// The endpoint with the widest lumen.
pub fn root_node(graph: &SkeletonGraph) -> Option<usize> {
    (0..graph.nodes.len())
        .filter(|&i| graph.nodes[i].kind == NodeKind::Endpoint)
        .max_by(|&a, &b| graph.nodes[a].radius.total_cmp(&graph.nodes[b].radius).then(b.cmp(&a)))
}

/// Dense path: positions, radius and owning branch per sample.
struct PathSamples {
    points: Vec<Point3<f64>>,
    branches: Vec<usize>,
}

/// Root-to-endpoint branch chains found by depth-first search.
fn root_paths(graph: &SkeletonGraph, root: usize) -> Vec<(usize, PathSamples)> {
    let mut out = Vec::new();
    let mut stack: Vec<(usize, Option<usize>, PathSamples)> = vec![(
        root,
        None,
        PathSamples {
            points: vec![graph.nodes[root].position],
            branches: vec![usize::MAX],
        },
    )];
    while let Some((node, via, path)) = stack.pop() {
        let next: Vec<_> = graph
            .outgoing(node)
            .into_iter()
            .filter(|(i, _)| Some(*i) != via)
            .collect();
        if next.is_empty() && node != root {
            out.push((node, path));
            continue;
        }
        for (bi, b) in next.into_iter().rev() {
            let mut p = PathSamples {
                points: path.points.clone(),
                branches: path.branches.clone(),
            };
            if p.branches[0] == usize::MAX {
                p.branches[0] = bi;
            }
            for q in &b.points[1..] {
                p.points.push(*q);
                p.branches.push(bi);
            }
            stack.push((b.end, Some(bi), p));
        }
    }
    out.sort_by_key(|(n, _)| *n);
    out
}

fn resample(path: &PathSamples, step: f64) -> PathSamples {
    let mut s = vec![0.0];
    for w in path.points.windows(2) {
        s.push(s.last().unwrap() + (w[1] - w[0]).norm());
    }
    let total = *s.last().unwrap();
    let n = ((total / step).ceil() as usize).max(1);
    let mut points = Vec::with_capacity(n + 1);
    let mut branches = Vec::with_capacity(n + 1);
    let mut seg = 0;
    for i in 0..=n {
        let target = total * i as f64 / n as f64;
        while seg + 2 < s.len() && s[seg + 1] < target {
            seg += 1;
        }
        let len = s[seg + 1] - s[seg];
        let f = if len > 0.0 { ((target - s[seg]) / len).clamp(0.0, 1.0) } else { 0.0 };
        points.push(path.points[seg] + (path.points[seg + 1] - path.points[seg]) * f);
        branches.push(path.branches[if f < 0.5 { seg } else { seg + 1 }]);
    }
    PathSamples { points, branches }
}

/// Symmetric moving average; the window shrinks near the ends so both
/// endpoints stay fixed.
fn smooth(points: &[Point3<f64>], half: usize) -> Vec<Point3<f64>> {
    let n = points.len();
    let mut prefix = vec![Vector3::zeros(); n + 1];
    for i in 0..n {
        prefix[i + 1] = prefix[i] + points[i].coords;
    }
    (0..n)
        .map(|i| {
            let w = half.min(i).min(n - 1 - i);
            Point3::from((prefix[i + w + 1] - prefix[i - w]) / (2 * w + 1) as f64)
        })
        .collect()
}

fn frame_from(z: &Vector3<f64>, x_hint: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>, Vector3<f64>) {
    let z = z.normalize();
    let x = (x_hint - z * x_hint.dot(&z)).normalize();
    let y = z.cross(&x);
    (x, y, z)
}

fn initial_x(z: &Vector3<f64>) -> Vector3<f64> {
    let axes = [Vector3::x(), Vector3::y(), Vector3::z()];
    let a = axes.iter().min_by(|a, b| a.dot(z).abs().total_cmp(&b.dot(z).abs())).unwrap();
    (a - z * a.dot(z)).normalize()
}

/// One waypoint sequence per root-to-endpoint path.
pub fn sample_waypoints(graph: &SkeletonGraph, opts: &WaypointOptions) -> Result<Vec<WaypointSequence>, SkeletonError> {
    if !(opts.base_spacing > 0.0) || !(opts.tau > 0.0) || opts.curvature_gain < 0.0 || opts.bifurcation_gain < 0.0 {
        return Err(SkeletonError::InvalidGraph("waypoint spacing parameters must be positive".into()));
    }
    let root = root_node(graph).ok_or_else(|| SkeletonError::InvalidGraph("graph has no endpoint".into()))?;
    let bifurcations = graph.bifurcations();
    let step = opts.base_spacing / RESAMPLE_DIVISIONS;
    let half = (opts.smoothing / step).round() as usize;

    let mut sequences = Vec::new();
    for (endpoint, raw) in root_paths(graph, root) {
        let dense = resample(&raw, step);
        let pts = smooth(&dense.points, half);
        let n = pts.len();
        let mut s = vec![0.0; n];
        for i in 1..n {
            s[i] = s[i - 1] + (pts[i] - pts[i - 1]).norm();
        }
        let total = s[n - 1];
        let tangent = |i: usize| -> Vector3<f64> {
            let (a, b) = (i.saturating_sub(1), (i + 1).min(n - 1));
            (pts[b] - pts[a]).normalize()
        };
        let kappa: Vec<f64> = (0..n)
            .map(|i| {
                if i == 0 || i == n - 1 {
                    return 0.0;
                }
                let (e0, e1) = (pts[i] - pts[i - 1], pts[i + 1] - pts[i]);
                let (l0, l1) = (e0.norm(), e1.norm());
                if l0 == 0.0 || l1 == 0.0 {
                    return 0.0;
                }
                let c = (e0.dot(&e1) / (l0 * l1)).clamp(-1.0, 1.0);
                let angle = e0.cross(&e1).norm().atan2(l0 * l1 * c);
                angle / (0.5 * (l0 + l1))
            })
            .collect();
        let kappa_at = |i: usize| -> f64 {
            // Ends inherit their neighbor's value.
            if n < 3 {
                0.0
            } else {
                kappa[i.clamp(1, n - 2)]
            }
        };
        let density: Vec<f64> = (0..n)
            .map(|i| {
                let d_bif = bifurcations.iter().map(|b| (pts[i] - b).norm()).fold(f64::INFINITY, f64::min);
                1.0 / opts.spacing(kappa_at(i), d_bif)
            })
            .collect();
        let mut count = vec![0.0; n];
        for i in 1..n {
            count[i] = count[i - 1] + 0.5 * (density[i - 1] + density[i]) * (s[i] - s[i - 1]);
        }

        // Invert the cumulative count at each integer.
        let mut placed: Vec<(f64, usize, f64)> = Vec::new();
        if total < opts.base_spacing {
            log::warn!("path to node {endpoint} is shorter than the base spacing; emitting a single waypoint");
            placed.push((0.0, 0, 0.0));
        } else {
            let mut seg = 0;
            let last = count[n - 1].floor() as usize;
            for k in 0..=last {
                let target = k as f64;
                while seg + 2 < n && count[seg + 1] < target {
                    seg += 1;
                }
                let span = count[seg + 1] - count[seg];
                let f = if span > 0.0 { ((target - count[seg]) / span).clamp(0.0, 1.0) } else { 0.0 };
                placed.push((s[seg] + f * (s[seg + 1] - s[seg]), seg, f));
            }
        }

        let mut waypoints = Vec::with_capacity(placed.len());
        let mut x_prev: Option<(Vector3<f64>, Vector3<f64>)> = None;
        for (k, &(arclength, seg, f)) in placed.iter().enumerate() {
            let j = (seg + 1).min(n - 1);
            let pos = pts[seg] + (pts[j] - pts[seg]) * f;
            let z = (tangent(seg) * (1.0 - f) + tangent(j) * f).normalize();
            let x_hint = match x_prev {
                None => initial_x(&z),
                Some((z0, x0)) => Rotation3::rotation_between(&z0, &z).map_or(x0, |r| r * x0),
            };
            let (x, y, z) = frame_from(&z, &x_hint);
            x_prev = Some((z, x));
            let rot = Rotation3::from_matrix_unchecked(Matrix3::from_columns(&[x, y, z]));
            waypoints.push(Waypoint {
                pose: Isometry3::from_parts(Translation3::from(pos.coords), UnitQuaternion::from_rotation_matrix(&rot)),
                timestamp: k as f64 / 10.0,
                curvature: (kappa_at(seg) * (1.0 - f) + kappa_at(j) * f).abs(),
                branch: dense.branches[if f < 0.5 { seg } else { j }],
                arclength,
            });
        }
        sequences.push(WaypointSequence { endpoint, waypoints });
    }
    Ok(sequences)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn straight(len: f64) -> SkeletonGraph {
        let pts: Vec<Point3<f64>> = (0..=40).map(|i| Point3::new(0.0, 0.0, len * i as f64 / 40.0)).collect();
        let mut radii = vec![0.003; 41];
        radii[0] = 0.004;
        SkeletonGraph::from_polylines(&[(pts, radii)], 1e-9).unwrap()
    }

    fn arc(radius: f64, sweep: f64) -> SkeletonGraph {
        let pts: Vec<Point3<f64>> = (0..=2000)
            .map(|i| {
                let a = sweep * i as f64 / 2000.0;
                Point3::new(radius * (1.0 - a.cos()), 0.0, radius * a.sin())
            })
            .collect();
        let mut radii = vec![0.002; 2001];
        radii[0] = 0.003;
        SkeletonGraph::from_polylines(&[(pts, radii)], 1e-9).unwrap()
    }

    #[test]
    fn straight_branch_is_uniform() {
        let seqs = sample_waypoints(&straight(0.0305), &WaypointOptions::default()).unwrap();
        assert_eq!(seqs.len(), 1);
        let p = seqs[0].positions();
        assert_eq!(p.len(), 31);
        for w in p.windows(2) {
            assert!(((w[1] - w[0]).norm() - 1e-3).abs() < 1e-9);
        }
        assert!((p[0] - Point3::origin()).norm() < 1e-15);
    }

    #[test]
    fn arc_spacing_follows_curvature() {
        let r = 0.02;
        let opts = WaypointOptions::default();
        let seqs = sample_waypoints(&arc(r, PI / 2.0), &opts).unwrap();
        let wps = &seqs[0].waypoints;
        let expected = opts.base_spacing / (1.0 + opts.curvature_gain / r);
        // Interior gaps, away from the filter's end effects.
        let n = wps.len();
        for w in wps[n / 4..3 * n / 4].windows(2) {
            let gap = w[1].arclength - w[0].arclength;
            assert!((gap - expected).abs() < 0.01 * expected, "{gap} vs {expected}");
            assert!((w[0].curvature - 1.0 / r).abs() < 0.01 / r);
        }
    }

    #[test]
    fn timestamps_and_frames() {
        let seqs = sample_waypoints(&arc(0.03, 1.0), &WaypointOptions::default()).unwrap();
        for (k, w) in seqs[0].waypoints.iter().enumerate() {
            assert_eq!(w.timestamp, k as f64 / 10.0);
            let m = w.pose.rotation.to_rotation_matrix().into_inner();
            let (x, y, z) = (m.column(0), m.column(1), m.column(2));
            for a in [x, y, z] {
                assert!((a.norm() - 1.0).abs() < 1e-9);
            }
            assert!(x.dot(&y).abs() < 1e-9 && y.dot(&z).abs() < 1e-9 && x.dot(&z).abs() < 1e-9);
            assert!((x.cross(&y) - z).norm() < 1e-9);
        }
        let wps = &seqs[0].waypoints;
        for w in wps.windows(2) {
            assert!(((w[1].timestamp - w[0].timestamp) - TIMESTEP).abs() < 1e-12);
        }
    }

    #[test]
    fn transported_frame_has_no_twist_on_planar_arc() {
        // For a planar curve the transported frame keeps one axis on the plane normal.
        let seqs = sample_waypoints(&arc(0.03, 1.2), &WaypointOptions::default()).unwrap();
        let first = seqs[0].waypoints[0].pose.rotation;
        let axis = if (first * Vector3::x()).y.abs() > 0.5 { Vector3::x() } else { Vector3::y() };
        for w in &seqs[0].waypoints {
            assert!(((w.pose.rotation * axis).y.abs() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn count_monotone_in_curvature_gain() {
        let g = arc(0.015, 2.0);
        let mut last = 0;
        for gain in [0.0, 1e-3, 2e-3, 5e-3, 1e-2] {
            let opts = WaypointOptions {
                curvature_gain: gain,
                ..Default::default()
            };
            let n = sample_waypoints(&g, &opts).unwrap()[0].len();
            assert!(n >= last);
            last = n;
        }
    }

    #[test]
    fn short_path_gives_single_waypoint() {
        let seqs = sample_waypoints(&straight(0.0005), &WaypointOptions::default()).unwrap();
        assert_eq!(seqs[0].len(), 1);
    }
}
