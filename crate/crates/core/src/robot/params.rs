use serde::{Deserialize, Serialize};

use crate::error::RobotError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RobotParams {
    /// Flexible segment length, m.
    pub l: f64,
    /// Cross-section constant, m.
    pub gamma: f64,
    /// Symmetric tendon displacement limit, m.
    pub q1_max: f64,
    pub mu_static: f64,
    pub mu_dynamic: f64,
    pub tip_radius: f64,
    /// Contact stiffness, N/m.
    pub stiffness: f64,
    /// Contact damping, N·s/m.
    pub damping: f64,
    /// Integration step along the backbone, m.
    pub ds: f64,
    pub contact_iterations: usize,
    /// Tangential speed below which contacts always stick, m/s.
    pub stick_velocity: f64,
    /// Keep the `q1·10⁻³` term in the curvature boundary condition.
    pub eq3_literal: bool,
    /// Orientation error weight in the IK cost, m/rad.
    pub ik_orientation_weight: f64,
    pub ik_damping: f64,
}

impl Default for RobotParams {
    fn default() -> Self {
        Self {
            l: 0.050,
            gamma: 1.75e-3,
            q1_max: 0.008,
            mu_static: 0.3,
            mu_dynamic: 0.25,
            tip_radius: 2.1e-3,
            stiffness: 200.0,
            damping: 2.0,
            ds: 0.5e-3,
            contact_iterations: 50,
            stick_velocity: 1e-4,
            eq3_literal: true,
            ik_orientation_weight: 0.01,
            ik_damping: 1e-4,
        }
    }
}

impl RobotParams {
    pub fn validate(&self) -> Result<(), RobotError> {
        let positive = [
            ("l", self.l),
            ("gamma", self.gamma),
            ("q1_max", self.q1_max),
            ("mu_static", self.mu_static),
            ("mu_dynamic", self.mu_dynamic),
            ("tip_radius", self.tip_radius),
            ("stiffness", self.stiffness),
            ("ds", self.ds),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(RobotError::InvalidParams(format!("{name} must be positive, got {v}")));
            }
        }
        if self.damping < 0.0 || self.ik_damping < 0.0 || self.ik_orientation_weight < 0.0 {
            return Err(RobotError::InvalidParams("damping and weights must be non-negative".into()));
        }
        if self.mu_dynamic > self.mu_static {
            return Err(RobotError::InvalidParams(format!(
                "mu_dynamic {} exceeds mu_static {}",
                self.mu_dynamic, self.mu_static
            )));
        }
        if self.contact_iterations == 0 {
            return Err(RobotError::InvalidParams("contact_iterations must be ≥ 1".into()));
        }
        Ok(())
    }

    /// Bending strain about the local x-axis for tendon displacement `q1`.
    pub fn curvature_from_q1(&self, q1: f64) -> f64 {
        let extra = if self.eq3_literal { q1 * 1e-3 } else { 0.0 };
        -q1 / ((self.l + extra) * self.gamma)
    }

    /// Inverse of [`RobotParams::curvature_from_q1`].
    pub fn q1_from_curvature(&self, ux: f64) -> f64 {
        let g = ux * self.gamma;
        if self.eq3_literal {
            -g * self.l / (1.0 + 1e-3 * g)
        } else {
            -g * self.l
        }
    }

    /// Diameter range of clinical scopes, halved.
    pub fn clinical_tip_radius_range() -> (f64, f64) {
        (1.2e-3, 3.1e-3)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RobotConfig {
    /// Tendon displacement, m.
    pub q1: f64,
    /// Axial rotation, rad.
    pub q2: f64,
    /// Insertion depth, m.
    pub q3: f64,
}

impl RobotConfig {
    pub fn new(q1: f64, q2: f64, q3: f64) -> Self {
        Self { q1, q2, q3 }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.q1, self.q2, self.q3]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn literal_curvature_constant() {
        let p = RobotParams::default();
        let u = p.curvature_from_q1(0.008);
        let direct = -0.008 / ((0.05 + 0.008 * 1e-3) * 1.75e-3);
        assert_eq!(u, direct);
        assert!((u + 91.413).abs() < 1e-3);
        assert!((p.q1_from_curvature(u) - 0.008).abs() < 1e-15);
        let loose = RobotParams {
            eq3_literal: false,
            ..p
        };
        assert!((loose.curvature_from_q1(0.008) + 0.008 / (0.05 * 1.75e-3)).abs() < 1e-12);
        assert!((loose.q1_from_curvature(loose.curvature_from_q1(-0.003)) + 0.003).abs() < 1e-15);
    }

    #[test]
    fn validation() {
        assert!(RobotParams::default().validate().is_ok());
        let bad = RobotParams {
            mu_dynamic: 0.4,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let (lo, hi) = RobotParams::clinical_tip_radius_range();
        assert!((lo..=hi).contains(&RobotParams::default().tip_radius));
    }
}
