//! Waypoint tracking: damped-least-squares IK on the rod model, actuator
//! noise and contact resolution per tick.

use std::f64::consts::{PI, TAU};

use nalgebra::{Isometry3, Matrix3, Point3, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::actuator::{ActuatorState, NoiseSwitches};
use super::contact::{step_quasi_static, Contact, EntryPlane};
use super::params::{RobotConfig, RobotParams};
use super::rod::{integrate, RodShape};
use crate::error::RobotError;
use crate::geometry::SdfGrid;
use crate::skeleton::{WaypointSequence, TIMESTEP};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackingOptions {
    pub noise: NoiseSwitches,
    /// Ticks without improvement above `stall_tolerance` before aborting.
    pub stall_ticks: usize,
    pub stall_tolerance: f64,
    pub ik_iterations: usize,
    /// Commands are issued this long before the frame they target is captured.
    pub command_lead: f64,
    /// Ignore contacts behind the plane through the first waypoint.
    pub entry_plane: bool,
}

impl Default for TrackingOptions {
    fn default() -> Self {
        Self {
            noise: NoiseSwitches::ON,
            stall_ticks: 20,
            stall_tolerance: 1e-3,
            ik_iterations: 30,
            command_lead: TIMESTEP / 2.0,
            entry_plane: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryEntry {
    pub frame_id: usize,
    pub t_sec: f64,
    pub q_cmd: RobotConfig,
    pub q_eff: RobotConfig,
    /// Achieved world-from-tip pose after contact.
    pub pose: Isometry3<f64>,
    pub target: Point3<f64>,
    /// Residual of the IK solve for `q_cmd`.
    pub ik_error: f64,
    /// Distance from the achieved tip to the target waypoint.
    pub tip_error: f64,
    pub delay: f64,
    pub contacts: Vec<Contact>,
    pub unresolved: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryLog {
    pub seed: u64,
    pub entries: Vec<TrajectoryEntry>,
}

impl TrajectoryLog {
    pub fn poses(&self) -> Vec<Isometry3<f64>> {
        self.entries.iter().map(|e| e.pose).collect()
    }

    pub fn tips(&self) -> Vec<Point3<f64>> {
        self.entries.iter().map(|e| Point3::from(e.pose.translation.vector)).collect()
    }
}

/// Centerline poses by arclength, extended straight beyond both ends.
#[derive(Debug, Clone)]
pub struct CenterlinePath {
    s: Vec<f64>,
    poses: Vec<Isometry3<f64>>,
}

impl CenterlinePath {
    pub fn new(seq: &WaypointSequence) -> Result<Self, RobotError> {
        if seq.is_empty() {
            return Err(RobotError::EmptySequence);
        }
        let mut s = Vec::with_capacity(seq.len());
        let mut poses = Vec::with_capacity(seq.len());
        for w in &seq.waypoints {
            if s.last().map_or(true, |&l| w.arclength > l) {
                s.push(w.arclength);
                poses.push(w.pose);
            }
        }
        Ok(Self { s, poses })
    }

    pub fn start(&self) -> f64 {
        self.s[0]
    }

    pub fn pose_at(&self, s: f64) -> Isometry3<f64> {
        let n = self.s.len();
        let shift = |pose: &Isometry3<f64>, ds: f64| {
            let z = pose.rotation * Vector3::z();
            Isometry3::from_parts(Translation3::from(pose.translation.vector + z * ds), pose.rotation)
        };
        let s = if s.is_finite() { s } else { self.s[0] };
        if s <= self.s[0] || n == 1 {
            let i = if s <= self.s[0] { 0 } else { n - 1 };
            return shift(&self.poses[i], s - self.s[i]);
        }
        if s >= self.s[n - 1] {
            return shift(&self.poses[n - 1], s - self.s[n - 1]);
        }
        let i = self.s.partition_point(|&x| x <= s) - 1;
        let f = (s - self.s[i]) / (self.s[i + 1] - self.s[i]);
        let (a, b) = (&self.poses[i], &self.poses[i + 1]);
        let t = a.translation.vector.lerp(&b.translation.vector, f);
        let r = a.rotation.try_slerp(&b.rotation, f, 1e-12).unwrap_or(a.rotation);
        Isometry3::from_parts(Translation3::from(t), r)
    }
}

/// Follow-the-leader kinematics: the passive shaft lies on the centerline and
/// the bending segment starts at arclength `q3 − l`.
pub struct Kinematics<'a> {
    pub path: &'a CenterlinePath,
    pub params: &'a RobotParams,
}

impl Kinematics<'_> {
    pub fn anchor(&self, q3: f64) -> Isometry3<f64> {
        self.path.pose_at(q3 - self.params.l)
    }

    pub fn shape(&self, q: &RobotConfig) -> RodShape {
        let u = Vector3::new(self.params.curvature_from_q1(q.q1), 0.0, 0.0);
        let rot0 = *nalgebra::Rotation3::from_axis_angle(&Vector3::z_axis(), q.q2).matrix();
        integrate(Point3::origin(), rot0, u, self.params.l, self.params.ds).transformed(&self.anchor(q.q3))
    }

    fn residual(&self, q: &RobotConfig, target: &Point3<f64>, axis: &Vector3<f64>) -> [f64; 6] {
        let shape = self.shape(q);
        let dp = shape.tip() - target;
        let dz = (shape.tip_tangent() - axis) * self.params.ik_orientation_weight;
        [dp.x, dp.y, dp.z, dz.x, dz.y, dz.z]
    }

    /// Damped least squares from `start`; returns the solution and its
    /// position error.
    pub fn solve(&self, start: RobotConfig, target: &Point3<f64>, axis: &Vector3<f64>, iterations: usize) -> (RobotConfig, f64) {
        let limit = self.params.q1_max;
        let lambda = self.params.ik_damping;
        let mut q = start;
        q.q1 = q.q1.clamp(-limit, limit);
        let cost = |r: &[f64; 6]| r.iter().map(|x| x * x).sum::<f64>();
        let mut r = self.residual(&q, target, axis);
        for _ in 0..iterations {
            if (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt() < 1e-7 {
                break;
            }
            let steps = [1e-6, 1e-5, 1e-6];
            let mut jac = nalgebra::Matrix6x3::zeros();
            for (c, h) in steps.iter().enumerate() {
                let mut a = q.as_array();
                let mut b = q.as_array();
                a[c] += h;
                b[c] -= h;
                let ra = self.residual(&RobotConfig::new(a[0], a[1], a[2]), target, axis);
                let rb = self.residual(&RobotConfig::new(b[0], b[1], b[2]), target, axis);
                for row in 0..6 {
                    jac[(row, c)] = (ra[row] - rb[row]) / (2.0 * h);
                }
            }
            let rv = nalgebra::Vector6::from_row_slice(&r);
            let lhs = jac.transpose() * jac + Matrix3::identity() * lambda;
            let Some(dq) = lhs.lu().solve(&(jac.transpose() * rv)).filter(|d| d.iter().all(|x| x.is_finite())) else {
                break;
            };
            let mut next = RobotConfig::new((q.q1 - dq[0]).clamp(-limit, limit), q.q2 - dq[1], q.q3 - dq[2]);
            let mut rn = self.residual(&next, target, axis);
            let mut halvings = 0;
            while cost(&rn) > cost(&r) && halvings < 8 {
                let f = 0.5f64.powi(halvings + 1);
                next = RobotConfig::new((q.q1 - dq[0] * f).clamp(-limit, limit), q.q2 - dq[1] * f, q.q3 - dq[2] * f);
                rn = self.residual(&next, target, axis);
                halvings += 1;
            }
            if cost(&rn) >= cost(&r) {
                break;
            }
            q = next;
            r = rn;
        }
        (q, (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt())
    }

    /// Constant-curvature guess that bends the segment toward the target.
    pub fn arc_seed(&self, q3: f64, target: &Point3<f64>, q2_near: f64) -> RobotConfig {
        let local = self.anchor(q3).inverse() * target;
        let d = local.x.hypot(local.y);
        let l = self.params.l;
        let mut k: f64 = 2.0 * d / (l * l);
        for _ in 0..20 {
            let kl = k * l;
            if kl.abs() < 1e-9 {
                break;
            }
            let f = (1.0 - kl.cos()) / k - d;
            let df = (kl * kl.sin() - (1.0 - kl.cos())) / (k * k);
            if df.abs() < 1e-15 {
                break;
            }
            k = (k - f / df).clamp(0.0, PI / l);
        }
        if !k.is_finite() {
            k = 0.0;
        }
        let psi = local.y.atan2(local.x);
        let q2 = unwrap_near(psi - PI / 2.0, q2_near);
        let q1 = self.params.q1_from_curvature(-k).clamp(-self.params.q1_max, self.params.q1_max);
        RobotConfig::new(if d < 1e-9 { 0.0 } else { q1 }, q2, q3)
    }
}

fn unwrap_near(angle: f64, near: f64) -> f64 {
    angle + TAU * ((near - angle) / TAU).round()
}

fn pose_of(shape: &RodShape) -> Isometry3<f64> {
    let r = nalgebra::Rotation3::from_matrix(shape.rotations.last().unwrap());
    Isometry3::from_parts(Translation3::from(shape.tip().coords), UnitQuaternion::from_rotation_matrix(&r))
}

/// Tracks `seq` with default options.
pub fn track_waypoints(seq: &WaypointSequence, sdf: &SdfGrid, params: &RobotParams, seed: u64) -> Result<TrajectoryLog, RobotError> {
    track_waypoints_with(seq, sdf, params, seed, &TrackingOptions::default())
}

pub fn track_waypoints_with(
    seq: &WaypointSequence,
    sdf: &SdfGrid,
    params: &RobotParams,
    seed: u64,
    opts: &TrackingOptions,
) -> Result<TrajectoryLog, RobotError> {
    params.validate()?;
    let path = CenterlinePath::new(seq)?;
    let kin = Kinematics { path: &path, params };
    let first = &seq.waypoints[0];
    let entry = EntryPlane {
        point: Point3::from(first.pose.translation.vector),
        normal: first.pose.rotation * Vector3::z(),
    };
    let entry = opts.entry_plane.then_some(&entry);

    let initial = RobotConfig::new(0.0, 0.0, path.start());
    let mut actuator = ActuatorState::new(seed, opts.noise, params, initial);
    let mut q_cmd = initial;
    let mut prev_tip: Option<Point3<f64>> = None;
    let mut entries = Vec::with_capacity(seq.len());
    let (mut best, mut stalled) = (f64::INFINITY, 0usize);

    for (k, w) in seq.waypoints.iter().enumerate() {
        let target = Point3::from(w.pose.translation.vector);
        let axis = w.pose.rotation * Vector3::z();
        let mut warm = q_cmd;
        if k > 0 {
            warm.q3 += w.arclength - seq.waypoints[k - 1].arclength;
        } else {
            warm.q3 = w.arclength;
        }
        let (mut q, mut err) = kin.solve(warm, &target, &axis, opts.ik_iterations);
        if err > 1e-6 {
            let seed_q = kin.arc_seed(w.arclength, &target, q_cmd.q2);
            let (qa, ea) = kin.solve(seed_q, &target, &axis, opts.ik_iterations);
            if ea < err {
                (q, err) = (qa, ea);
            }
        }
        q.q2 = unwrap_near(q.q2, q_cmd.q2);
        if q.q2.abs() > PI {
            q.q2 = unwrap_near(q.q2, 0.0);
        }
        q_cmd = q;

        if err > opts.stall_tolerance {
            if err < best {
                best = err;
                stalled = 0;
            } else {
                stalled += 1;
                if stalled >= opts.stall_ticks {
                    return Err(RobotError::IkStall {
                        tick: k,
                        error_m: err,
                        ticks: stalled,
                    });
                }
            }
        } else {
            best = f64::INFINITY;
            stalled = 0;
        }

        let now = w.timestamp;
        let delay = actuator.issue(q_cmd, now - opts.command_lead, k as u64);
        let q_eff = actuator.effective_at(now);
        let free = kin.shape(&q_eff);
        let velocity = prev_tip.map_or(Vector3::zeros(), |p| (free.tip() - p) / TIMESTEP);
        let (shape, report) = step_quasi_static(&free, sdf, params, &velocity, TIMESTEP, entry);
        if report.unresolved {
            log::warn!("tick {k}: contact penetration unresolved, shape projected");
        }
        let pose = pose_of(&shape);
        prev_tip = Some(shape.tip());
        entries.push(TrajectoryEntry {
            frame_id: k,
            t_sec: now,
            q_cmd,
            q_eff,
            pose,
            target,
            ik_error: err,
            tip_error: (shape.tip() - target).norm(),
            delay,
            contacts: report.contacts,
            unresolved: report.unresolved,
        });
    }
    Ok(TrajectoryLog { seed, entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::GridSpec;
    use crate::skeleton::{Waypoint, WaypointSequence};

    fn straight_sequence(n: usize, spacing: f64) -> WaypointSequence {
        let waypoints = (0..n)
            .map(|k| Waypoint {
                pose: Isometry3::translation(0.0, 0.0, k as f64 * spacing),
                timestamp: k as f64 * TIMESTEP,
                curvature: 0.0,
                branch: 0,
                arclength: k as f64 * spacing,
            })
            .collect();
        WaypointSequence {
            endpoint: 0,
            waypoints,
        }
    }

    fn wide_cylinder() -> SdfGrid {
        let r = 8e-3;
        let g = GridSpec::new([41, 41, 101], [0.5e-3; 3], [-10e-3, -10e-3, -10e-3]).unwrap();
        SdfGrid::from_fn(g, move |p| p.x.hypot(p.y) - r).unwrap()
    }

    fn quiet() -> TrackingOptions {
        TrackingOptions {
            noise: NoiseSwitches::OFF,
            ..Default::default()
        }
    }

    #[test]
    fn straight_line_tracks_exactly() {
        let seq = straight_sequence(30, 1e-3);
        let p = RobotParams::default();
        let log = track_waypoints_with(&seq, &wide_cylinder(), &p, 1, &quiet()).unwrap();
        assert_eq!(log.entries.len(), 30);
        for e in &log.entries {
            assert!(e.tip_error <= 0.5e-3, "tick {} error {}", e.frame_id, e.tip_error);
            assert!(e.q_eff.q1.abs() < 1e-6);
            assert!(e.contacts.is_empty());
        }
    }

    #[test]
    fn noise_off_is_bit_identical() {
        let seq = straight_sequence(15, 1e-3);
        let p = RobotParams::default();
        let sdf = wide_cylinder();
        let a = track_waypoints_with(&seq, &sdf, &p, 5, &quiet()).unwrap();
        let b = track_waypoints_with(&seq, &sdf, &p, 5, &quiet()).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn seeds_differ_but_stay_in_lumen() {
        let seq = straight_sequence(25, 1e-3);
        let p = RobotParams::default();
        let sdf = wide_cylinder();
        let a = track_waypoints(&seq, &sdf, &p, 1).unwrap();
        let b = track_waypoints(&seq, &sdf, &p, 2).unwrap();
        assert_ne!(a.entries.iter().map(|e| e.delay).collect::<Vec<_>>(), b.entries.iter().map(|e| e.delay).collect::<Vec<_>>());
        for e in a.entries.iter().chain(&b.entries) {
            assert!(sdf.sample(&Point3::from(e.pose.translation.vector)) + p.tip_radius <= 1e-6);
            assert!(e.q_eff.q1.abs() <= p.q1_max);
        }
    }

    #[test]
    fn arc_seed_reaches_lateral_target() {
        let seq = straight_sequence(60, 1e-3);
        let path = CenterlinePath::new(&seq).unwrap();
        let p = RobotParams::default();
        let kin = Kinematics { path: &path, params: &p };
        let target = Point3::new(3e-3, 4e-3, 0.028);
        let q = kin.arc_seed(0.03, &target, 0.0);
        let tip = kin.shape(&q).tip();
        let local_dir = (tip.xy() - Point3::origin().xy()).normalize();
        assert!((local_dir - nalgebra::Vector2::new(0.6, 0.8)).norm() < 1e-9);
        let (_, err) = kin.solve(q, &target, &Vector3::z(), 50);
        assert!(err < 1e-3);
    }

    #[test]
    fn empty_sequence_is_rejected() {
        let seq = WaypointSequence {
            endpoint: 0,
            waypoints: vec![],
        };
        assert!(matches!(
            track_waypoints(&seq, &wide_cylinder(), &RobotParams::default(), 0),
            Err(RobotError::EmptySequence)
        ));
    }

    #[test]
    fn path_interpolates_and_extends() {
        let seq = straight_sequence(5, 1e-3);
        let path = CenterlinePath::new(&seq).unwrap();
        let p = path.pose_at(-0.05).translation.vector;
        assert!((p - Vector3::new(0.0, 0.0, -0.05)).norm() < 1e-15);
        let p = path.pose_at(2.5e-3).translation.vector;
        assert!((p - Vector3::new(0.0, 0.0, 2.5e-3)).norm() < 1e-15);
    }
}
