//! Backbone integration for the bending segment.

use nalgebra::{Isometry3, Matrix3, Point3, Rotation3, Translation3, UnitQuaternion, Vector3};

use super::params::{RobotConfig, RobotParams};
use crate::error::RobotError;

/// Discretized backbone: arclength, position and orientation per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct RodShape {
    pub s: Vec<f64>,
    pub positions: Vec<Point3<f64>>,
    pub rotations: Vec<Matrix3<f64>>,
    /// Constant strain, rad/m.
    pub u: Vector3<f64>,
}

fn hat(u: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -u.z, u.y, u.z, 0.0, -u.x, -u.y, u.x, 0.0)
}

/// Two Newton–Schulz steps toward the nearest rotation.
fn reorthonormalize(r: &Matrix3<f64>) -> Matrix3<f64> {
    let mut m = *r;
    for _ in 0..2 {
        m = m * (Matrix3::identity() * 3.0 - m.transpose() * m) * 0.5;
    }
    m
}

pub fn orthonormality_error(r: &Matrix3<f64>) -> f64 {
    (r.transpose() * r - Matrix3::identity()).abs().max()
}

/// Integrates dr/ds = R·e₃, dR/ds = R·û with fixed-step RK4 from the base
/// conditions r₀ = (0, 0, q3), R₀ = Rot_z(q2), u = (u₀ₓ(q1), 0, 0).
pub fn rod_shape(q: &RobotConfig, params: &RobotParams) -> Result<RodShape, RobotError> {
    if q.q1.abs() > params.q1_max * (1.0 + 1e-12) || !q.q1.is_finite() {
        return Err(RobotError::TendonOutOfRange {
            q1: q.q1,
            limit: params.q1_max,
        });
    }
    let u = Vector3::new(params.curvature_from_q1(q.q1), 0.0, 0.0);
    let r0 = Point3::new(0.0, 0.0, q.q3);
    let rot0 = *Rotation3::from_axis_angle(&Vector3::z_axis(), q.q2).matrix();
    Ok(integrate(r0, rot0, u, params.l, params.ds))
}

/// RK4 integration of the backbone for a constant strain `u`.
pub fn integrate(r0: Point3<f64>, rot0: Matrix3<f64>, u: Vector3<f64>, length: f64, ds: f64) -> RodShape {
    let n = ((length / ds) - 1e-9).ceil().max(1.0) as usize;
    let h = length / n as f64;
    let uh = hat(&u);
    let e3 = Vector3::z();
    let f = |rot: &Matrix3<f64>| (rot * e3, rot * uh);
    let mut s = Vec::with_capacity(n + 1);
    let mut positions = Vec::with_capacity(n + 1);
    let mut rotations = Vec::with_capacity(n + 1);
    let (mut r, mut rot) = (r0.coords, rot0);
    s.push(0.0);
    positions.push(Point3::from(r));
    rotations.push(rot);
    for i in 1..=n {
        let (k1r, k1q) = f(&rot);
        let (k2r, k2q) = f(&(rot + k1q * (h / 2.0)));
        let (k3r, k3q) = f(&(rot + k2q * (h / 2.0)));
        let (k4r, k4q) = f(&(rot + k3q * h));
        r += (k1r + k2r * 2.0 + k3r * 2.0 + k4r) * (h / 6.0);
        rot = reorthonormalize(&(rot + (k1q + k2q * 2.0 + k3q * 2.0 + k4q) * (h / 6.0)));
        s.push(i as f64 * h);
        positions.push(Point3::from(r));
        rotations.push(rot);
    }
    RodShape {
        s,
        positions,
        rotations,
        u,
    }
}

fn isometry(p: &Point3<f64>, r: &Matrix3<f64>) -> Isometry3<f64> {
    let rot = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(*r));
    Isometry3::from_parts(Translation3::from(p.coords), rot)
}

impl RodShape {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn tip(&self) -> Point3<f64> {
        *self.positions.last().unwrap()
    }

    pub fn tip_tangent(&self) -> Vector3<f64> {
        self.rotations.last().unwrap().column(2).into_owned()
    }

    pub fn tip_pose(&self) -> Isometry3<f64> {
        isometry(&self.tip(), self.rotations.last().unwrap())
    }

    pub fn step(&self) -> f64 {
        if self.s.len() > 1 {
            self.s[1] - self.s[0]
        } else {
            0.0
        }
    }

    /// Largest ‖RᵀR − I‖∞ over all samples.
    pub fn max_orthonormality_error(&self) -> f64 {
        self.rotations.iter().map(orthonormality_error).fold(0.0, f64::max)
    }

    /// The same backbone expressed in another frame.
    pub fn transformed(&self, frame: &Isometry3<f64>) -> RodShape {
        let m = *frame.rotation.to_rotation_matrix().matrix();
        RodShape {
            s: self.s.clone(),
            positions: self.positions.iter().map(|p| frame * p).collect(),
            rotations: self.rotations.iter().map(|r| m * r).collect(),
            u: self.u,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn straight_rod() {
        let p = RobotParams::default();
        let shape = rod_shape(&RobotConfig::new(0.0, 0.0, 0.02), &p).unwrap();
        assert_eq!(shape.len(), 101);
        for (s, r) in shape.s.iter().zip(&shape.positions) {
            assert!((r - Point3::new(0.0, 0.0, 0.02 + s)).norm() < 1e-15);
        }
        assert!((shape.tip() - Point3::new(0.0, 0.0, 0.07)).norm() < 1e-15);
    }

    #[test]
    fn out_of_range_is_rejected() {
        let p = RobotParams::default();
        assert!(matches!(
            rod_shape(&RobotConfig::new(0.0081, 0.0, 0.0), &p),
            Err(RobotError::TendonOutOfRange { .. })
        ));
    }

    #[test]
    fn arc_chord_matches_closed_form() {
        let p = RobotParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let q = RobotConfig::new(rng.gen_range(-0.008..0.008), rng.gen_range(-3.0..3.0), rng.gen_range(-0.01..0.01));
            let shape = rod_shape(&q, &p).unwrap();
            let k = shape.u.x.abs();
            let chord = (shape.tip() - shape.positions[0]).norm();
            let expected = 2.0 / k * (k * p.l / 2.0).sin();
            assert!((chord - expected).abs() <= 1e-6 * expected);
            assert!(shape.max_orthonormality_error() <= 1e-9);
        }
    }

    #[test]
    fn bending_direction_follows_q1_and_q2() {
        let p = RobotParams::default();
        let tip = rod_shape(&RobotConfig::new(0.004, 0.0, 0.0), &p).unwrap().tip();
        assert!(tip.y > 0.0 && tip.x.abs() < 1e-12);
        let tip = rod_shape(&RobotConfig::new(0.004, -std::f64::consts::FRAC_PI_2, 0.0), &p).unwrap().tip();
        assert!(tip.x > 0.0 && tip.y.abs() < 1e-12);
    }

    #[test]
    fn halving_step_changes_tip_little() {
        let p = RobotParams::default();
        let q = RobotConfig::new(0.008, 0.7, 0.0);
        let a = rod_shape(&q, &p).unwrap().tip();
        let b = rod_shape(&q, &RobotParams { ds: p.ds / 2.0, ..p }).unwrap().tip();
        assert!((a - b).norm() <= 1e-7);
    }

    #[test]
    fn samples_are_evenly_spaced() {
        let p = RobotParams::default();
        let shape = rod_shape(&RobotConfig::new(-0.006, 0.3, 0.0), &p).unwrap();
        for w in shape.positions.windows(2) {
            assert!(((w[1] - w[0]).norm() - p.ds).abs() <= 1e-6);
        }
    }
}
