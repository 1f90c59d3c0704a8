//! Quasi-static soft contact between the backbone and the airway wall, with
//! Coulomb stick/slip friction.

use nalgebra::{Point3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use super::params::RobotParams;
use super::rod::RodShape;
use crate::geometry::SdfGrid;

/// Residual penetration accepted as resolved, m.
pub const CONTACT_TOLERANCE: f64 = 1e-6;
const PROJECTION_PASSES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Stick,
    Slip,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Contact {
    pub sample: usize,
    pub point: Point3<f64>,
    /// Unit contact normal pointing from the wall into the lumen.
    pub normal: Vector3<f64>,
    pub penetration: f64,
    pub normal_force: f64,
    pub tangential_force: Vector3<f64>,
    pub regime: Regime,
    pub slip_displacement: Vector3<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ContactReport {
    pub contacts: Vec<Contact>,
    pub iterations: usize,
    /// Inextensible resolution failed and plain projection was used.
    pub unresolved: bool,
    pub max_penetration_before: f64,
    pub max_penetration_after: f64,
}

/// Samples behind this plane (e.g. outside the entry of the airway) are
/// ignored for contact.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntryPlane {
    pub point: Point3<f64>,
    pub normal: Vector3<f64>,
}

impl EntryPlane {
    pub fn admits(&self, p: &Point3<f64>) -> bool {
        (p - self.point).dot(&self.normal) >= 0.0
    }
}

/// Normal and friction response of one penetrating sample.
pub fn contact_law(
    penetration: f64,
    normal: &Vector3<f64>,
    velocity: &Vector3<f64>,
    dt: f64,
    params: &RobotParams,
) -> (f64, Vector3<f64>, Regime, Vector3<f64>) {
    let k = params.stiffness;
    let vn = velocity.dot(normal);
    let fn_ = (k * penetration - params.damping * vn).max(0.0);
    let vt = velocity - normal * vn;
    let speed = vt.norm();
    let demand = k * speed * dt;
    if speed < params.stick_velocity || demand <= params.mu_static * fn_ {
        (fn_, -vt * (k * dt), Regime::Stick, Vector3::zeros())
    } else {
        let dir = vt / speed;
        let ft = params.mu_dynamic * fn_;
        (fn_, -dir * ft, Regime::Slip, vt * dt - dir * (ft / k))
    }
}

fn penetration(sdf: &SdfGrid, p: &Point3<f64>, params: &RobotParams) -> f64 {
    sdf.sample(p) + params.tip_radius
}

fn inward(sdf: &SdfGrid, p: &Point3<f64>) -> Vector3<f64> {
    -sdf.normal(p)
}

/// Rebuilds an inextensible backbone from the base toward displaced targets.
fn follow_targets(base: &Point3<f64>, targets: &[Point3<f64>], step: f64) -> Vec<Point3<f64>> {
    let mut out = Vec::with_capacity(targets.len());
    out.push(*base);
    for t in &targets[1..] {
        let prev = *out.last().unwrap();
        let d = t - prev;
        let n = d.norm();
        out.push(if n > 0.0 { prev + d * (step / n) } else { *t });
    }
    out
}

fn chord(points: &[Point3<f64>], i: usize) -> Vector3<f64> {
    let j = if i + 1 < points.len() { i } else { i - 1 };
    (points[j + 1] - points[j]).normalize()
}

/// Rotates each frame by the change of its local chord direction.
fn rebuild_rotations(shape: &RodShape, positions: Vec<Point3<f64>>) -> RodShape {
    let rotations = (0..positions.len())
        .map(|i| {
            let (a, b) = (chord(&shape.positions, i), chord(&positions, i));
            let r = Rotation3::rotation_between(&a, &b).unwrap_or_else(Rotation3::identity);
            r.matrix() * shape.rotations[i]
        })
        .collect();
    RodShape {
        s: shape.s.clone(),
        positions,
        rotations,
        u: shape.u,
    }
}

/// One quasi-static contact step. `shape` is in world coordinates; the base
/// sample is held fixed and all samples share the tip velocity.
pub fn step_quasi_static(
    shape: &RodShape,
    sdf: &SdfGrid,
    params: &RobotParams,
    velocity: &Vector3<f64>,
    dt: f64,
    entry: Option<&EntryPlane>,
) -> (RodShape, ContactReport) {
    let considered = |i: usize, p: &Point3<f64>| i > 0 && entry.map_or(true, |e| e.admits(p));
    let depth = |pts: &[Point3<f64>]| -> Vec<f64> {
        pts.iter()
            .enumerate()
            .map(|(i, p)| if considered(i, p) { penetration(sdf, p, params) } else { f64::NEG_INFINITY })
            .collect()
    };
    let before = depth(&shape.positions);
    let mut report = ContactReport {
        max_penetration_before: before.iter().copied().fold(0.0, f64::max),
        ..Default::default()
    };
    if before.iter().all(|&d| d <= 0.0) {
        return (shape.clone(), report);
    }

    let k = params.stiffness;
    let mut targets = shape.positions.clone();
    for (i, &d) in before.iter().enumerate() {
        if d <= 0.0 {
            continue;
        }
        let p = shape.positions[i];
        let n = inward(sdf, &p);
        let (fn_, ft, regime, slip) = contact_law(d, &n, velocity, dt, params);
        targets[i] = p + (n * fn_ + ft) / k;
        report.contacts.push(Contact {
            sample: i,
            point: p,
            normal: n,
            penetration: d,
            normal_force: fn_,
            tangential_force: ft,
            regime,
            slip_displacement: slip,
        });
    }

    let step = shape.step();
    let mut positions = follow_targets(&shape.positions[0], &targets, step);
    let mut resolved = false;
    for it in 0..params.contact_iterations {
        report.iterations = it + 1;
        let d = depth(&positions);
        if d.iter().all(|&x| x <= CONTACT_TOLERANCE) {
            resolved = true;
            break;
        }
        let targets: Vec<Point3<f64>> = positions
            .iter()
            .zip(&d)
            .map(|(p, &x)| if x > 0.0 { p + inward(sdf, p) * (x + CONTACT_TOLERANCE) } else { *p })
            .collect();
        positions = follow_targets(&shape.positions[0], &targets, step);
    }
    if !resolved {
        report.unresolved = true;
        for _ in 0..PROJECTION_PASSES {
            let d = depth(&positions);
            if d.iter().all(|&x| x <= CONTACT_TOLERANCE) {
                break;
            }
            for (p, &x) in positions.iter_mut().zip(&d) {
                if x > 0.0 {
                    *p += inward(sdf, p) * (x + CONTACT_TOLERANCE);
                }
            }
        }
    }
    // Never leave a sample deeper than it started.
    let after = depth(&positions);
    for i in 0..positions.len() {
        if after[i] > before[i].max(CONTACT_TOLERANCE) {
            let p = positions[i];
            positions[i] = p + inward(sdf, &p) * (after[i] - before[i].max(0.0));
        }
    }
    report.max_penetration_after = depth(&positions).iter().copied().fold(0.0, f64::max);
    (rebuild_rotations(shape, positions), report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::GridSpec;
    use crate::robot::params::RobotConfig;
    use crate::robot::rod::rod_shape;

    fn plane_sdf() -> SdfGrid {
        // Wall at x = 0.01 with the lumen on the x < 0.01 side.
        let g = GridSpec::new([41, 41, 81], [1e-3; 3], [-0.02, -0.02, -0.01]).unwrap();
        SdfGrid::from_fn(g, |p| p.x - 0.01).unwrap()
    }

    #[test]
    fn free_rod_is_untouched() {
        let p = RobotParams::default();
        let shape = rod_shape(&RobotConfig::new(0.0, 0.0, 0.0), &p).unwrap();
        let (out, rep) = step_quasi_static(&shape, &plane_sdf(), &p, &Vector3::zeros(), 0.1, None);
        assert_eq!(out, shape);
        assert!(rep.contacts.is_empty());
    }

    #[test]
    fn static_penetration_force() {
        let p = RobotParams::default();
        let n = Vector3::new(-1.0, 0.0, 0.0);
        let (fn_, ft, regime, slip) = contact_law(1e-3, &n, &Vector3::zeros(), 0.1, &p);
        assert!((fn_ - 200.0 * 1e-3).abs() < 1e-15);
        assert_eq!(regime, Regime::Stick);
        assert_eq!(ft, Vector3::zeros());
        assert_eq!(slip, Vector3::zeros());
    }

    #[test]
    fn cone_boundary_flips_regime() {
        let p = RobotParams::default();
        let n = Vector3::new(-1.0, 0.0, 0.0);
        let (delta, dt) = (1e-3, 0.1);
        let fn_ = p.stiffness * delta;
        // Tangential speed whose demand k·|v|·dt equals μs·F_n.
        let v_edge = p.mu_static * fn_ / (p.stiffness * dt);
        let (_, _, r, slip) = contact_law(delta, &n, &Vector3::new(0.0, 0.0, v_edge), dt, &p);
        assert_eq!(r, Regime::Stick);
        assert_eq!(slip, Vector3::zeros());
        let (f, ft, r, _) = contact_law(delta, &n, &Vector3::new(0.0, 0.0, v_edge * (1.0 + 1e-9)), dt, &p);
        assert_eq!(r, Regime::Slip);
        assert!((ft.norm() - p.mu_dynamic * f).abs() < 1e-15);
        assert!(ft.z < 0.0);
    }

    #[test]
    fn damping_adds_force_when_pressing_in() {
        let p = RobotParams::default();
        let n = Vector3::new(-1.0, 0.0, 0.0);
        let (f, ..) = contact_law(1e-3, &n, &Vector3::new(0.01, 0.0, 0.0), 0.1, &p);
        assert!((f - (0.2 + 2.0 * 0.01)).abs() < 1e-15);
    }

    #[test]
    fn penetrating_rod_is_pushed_out() {
        let p = RobotParams::default();
        // Bend toward +x into the wall.
        let shape = rod_shape(&RobotConfig::new(0.006, -std::f64::consts::FRAC_PI_2, 0.0), &p).unwrap();
        let sdf = plane_sdf();
        let before = shape.positions.iter().map(|q| sdf.sample(q) + p.tip_radius).fold(f64::MIN, f64::max);
        assert!(before > 0.0);
        let (out, rep) = step_quasi_static(&shape, &sdf, &p, &Vector3::new(0.01, 0.0, 0.0), 0.1, None);
        assert!(!rep.contacts.is_empty());
        assert!(rep.max_penetration_after <= rep.max_penetration_before);
        assert!(rep.max_penetration_after <= CONTACT_TOLERANCE);
        for (a, b) in out.positions.iter().zip(&shape.positions) {
            let (da, db) = (sdf.sample(a) + p.tip_radius, sdf.sample(b) + p.tip_radius);
            assert!(da <= db.max(CONTACT_TOLERANCE) + 1e-12);
        }
        assert!(out.max_orthonormality_error_loose() < 1e-9);
        if !rep.unresolved {
            for w in out.positions.windows(2) {
                assert!(((w[1] - w[0]).norm() - shape.step()).abs() < 1e-9);
            }
        }
        for c in rep.contacts.iter().filter(|c| c.regime == Regime::Stick) {
            assert_eq!(c.slip_displacement, Vector3::zeros());
        }
    }

    #[test]
    fn entry_plane_excludes_samples() {
        let p = RobotParams::default();
        let shape = rod_shape(&RobotConfig::new(0.006, -std::f64::consts::FRAC_PI_2, 0.0), &p).unwrap();
        let plane = EntryPlane {
            point: Point3::new(0.0, 0.0, 1.0),
            normal: Vector3::z(),
        };
        let (out, rep) = step_quasi_static(&shape, &plane_sdf(), &p, &Vector3::zeros(), 0.1, Some(&plane));
        assert!(rep.contacts.is_empty());
        assert_eq!(out, shape);
    }

    impl RodShape {
        fn max_orthonormality_error_loose(&self) -> f64 {
            self.max_orthonormality_error()
        }
    }
}
