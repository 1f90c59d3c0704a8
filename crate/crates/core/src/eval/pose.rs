//! Relative pose accuracy over frame pairs: RRA, RTA and AUC.

use nalgebra::{Isometry3, Matrix3, Matrix4, Rotation3, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::EvalError;

/// Ground-truth pairs whose relative translation is shorter than this are
/// left out of RTA.
pub const MIN_TRANSLATION: f64 = 1e-6;
const ORTHONORMAL_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct PoseSet {
    pub frame_ids: Vec<usize>,
    /// World-from-camera.
    pub poses: Vec<Isometry3<f64>>,
}

impl PoseSet {
    pub fn new(frame_ids: Vec<usize>, poses: Vec<Isometry3<f64>>) -> Result<Self, EvalError> {
        if poses.len() < 2 {
            return Err(EvalError::TooFewPoses(poses.len()));
        }
        if frame_ids.len() != poses.len() {
            return Err(EvalError::DimensionMismatch(format!("{} ids for {} poses", frame_ids.len(), poses.len())));
        }
        Ok(Self { frame_ids, poses })
    }

    pub fn sequential(poses: Vec<Isometry3<f64>>) -> Result<Self, EvalError> {
        Self::new((0..poses.len()).collect(), poses)
    }

    /// From homogeneous matrices; rotation blocks must be orthonormal with
    /// determinant +1 to within 1e-6.
    pub fn from_matrices(frame_ids: Vec<usize>, mats: &[Matrix4<f64>]) -> Result<Self, EvalError> {
        let mut poses = Vec::with_capacity(mats.len());
        for (k, m) in mats.iter().enumerate() {
            let r: Matrix3<f64> = m.fixed_view::<3, 3>(0, 0).into_owned();
            let err = (r.transpose() * r - Matrix3::identity()).abs().max();
            if err > ORTHONORMAL_TOLERANCE || (r.determinant() - 1.0).abs() > ORTHONORMAL_TOLERANCE {
                return Err(EvalError::DimensionMismatch(format!("pose {k} rotation is not orthonormal (error {err:.2e})")));
            }
            let rot = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(r));
            poses.push(Isometry3::from_parts(Translation3::new(m[(0, 3)], m[(1, 3)], m[(2, 3)]), rot));
        }
        Self::new(frame_ids, poses)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairSelection {
    All,
    /// Pairs at most this many frames apart.
    Window(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AucCombine {
    /// A pair counts at τ only when both errors are below τ.
    Max,
    Min,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PoseMetricOptions {
    pub rra_threshold_deg: f64,
    pub rta_threshold_deg: f64,
    pub auc_max_deg: usize,
    pub pairs: PairSelection,
    pub auc_combine: AucCombine,
}

impl Default for PoseMetricOptions {
    fn default() -> Self {
        Self {
            rra_threshold_deg: 5.0,
            rta_threshold_deg: 5.0,
            auc_max_deg: 30,
            pairs: PairSelection::All,
            auc_combine: AucCombine::Max,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairError {
    pub i: usize,
    pub j: usize,
    pub rotation_deg: f64,
    /// `None` when the ground-truth baseline is below [`MIN_TRANSLATION`].
    pub translation_deg: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseMetrics {
    /// Percent.
    pub rra: f64,
    pub rta: f64,
    pub auc: f64,
    pub pairs: usize,
    pub translation_excluded: usize,
    pub errors: Vec<PairError>,
}

/// Angle of a rotation, robust near zero and π.
pub fn rotation_angle(q: &UnitQuaternion<f64>) -> f64 {
    2.0 * q.imag().norm().atan2(q.scalar().abs())
}

/// Angle between two vectors; a zero vector against a nonzero one is
/// maximally wrong.
pub fn direction_angle(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    if a.norm() == 0.0 || b.norm() == 0.0 {
        return std::f64::consts::PI;
    }
    a.cross(b).norm().atan2(a.dot(b))
}

fn relative(a: &Isometry3<f64>, b: &Isometry3<f64>) -> Isometry3<f64> {
    a.inverse() * b
}

pub fn pair_error(pred: &PoseSet, gt: &PoseSet, i: usize, j: usize) -> PairError {
    let rp = relative(&pred.poses[i], &pred.poses[j]);
    let rg = relative(&gt.poses[i], &gt.poses[j]);
    let rot = rotation_angle(&(rp.rotation.inverse() * rg.rotation)).to_degrees();
    let tg = rg.translation.vector;
    let trans = (tg.norm() >= MIN_TRANSLATION).then(|| direction_angle(&rp.translation.vector, &tg).to_degrees());
    PairError {
        i,
        j,
        rotation_deg: rot,
        translation_deg: trans,
    }
}

fn percent_below(values: impl Iterator<Item = f64>, threshold: f64) -> f64 {
    let (mut hit, mut n) = (0usize, 0usize);
    for v in values {
        n += 1;
        hit += (v < threshold) as usize;
    }
    if n == 0 {
        0.0
    } else {
        100.0 * hit as f64 / n as f64
    }
}

/// Mean over τ = 1°, 2°, …, `max_deg` of the percentage of errors below τ.
pub fn auc(errors: &[f64], max_deg: usize) -> f64 {
    if errors.is_empty() || max_deg == 0 {
        return 0.0;
    }
    (1..=max_deg).map(|t| percent_below(errors.iter().copied(), t as f64)).sum::<f64>() / max_deg as f64
}

pub fn pose_metrics(pred: &PoseSet, gt: &PoseSet, opts: &PoseMetricOptions) -> Result<PoseMetrics, EvalError> {
    if pred.frame_ids != gt.frame_ids {
        return Err(EvalError::FrameMismatch);
    }
    let n = gt.poses.len();
    if n < 2 {
        return Err(EvalError::TooFewPoses(n));
    }
    let mut errors = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if let PairSelection::Window(w) = opts.pairs {
                if j - i > w {
                    break;
                }
            }
            errors.push(pair_error(pred, gt, i, j));
        }
    }
    let combined: Vec<f64> = errors
        .iter()
        .map(|e| match (e.translation_deg, opts.auc_combine) {
            (Some(t), AucCombine::Max) => e.rotation_deg.max(t),
            (Some(t), AucCombine::Min) => e.rotation_deg.min(t),
            (None, _) => e.rotation_deg,
        })
        .collect();
    Ok(PoseMetrics {
        rra: percent_below(errors.iter().map(|e| e.rotation_deg), opts.rra_threshold_deg),
        rta: percent_below(errors.iter().filter_map(|e| e.translation_deg), opts.rta_threshold_deg),
        auc: auc(&combined, opts.auc_max_deg),
        pairs: errors.len(),
        translation_excluded: errors.iter().filter(|e| e.translation_deg.is_none()).count(),
        errors,
    })
}

/// Plain-text table with the benchmark's column names.
pub fn format_pose_table(name: &str, m: &PoseMetrics, opts: &PoseMetricOptions) -> String {
    let h = [
        format!("RRA@{}°", opts.rra_threshold_deg),
        format!("RTA@{}°", opts.rta_threshold_deg),
        format!("AUC@{}°", opts.auc_max_deg),
    ];
    format!(
        "{:<16} {:>10} {:>10} {:>10}\n{:<16} {:>10.2} {:>10.2} {:>10.2}\n",
        "Method", h[0], h[1], h[2], name, m.rra, m.rta, m.auc
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(n: usize) -> PoseSet {
        let poses = (0..n)
            .map(|k| Isometry3::new(Vector3::new(0.0, 0.0, 0.01 * k as f64), Vector3::new(0.0, 0.0, 0.05 * k as f64)))
            .collect();
        PoseSet::sequential(poses).unwrap()
    }

    #[test]
    fn identical_sets_score_perfectly() {
        let gt = line(6);
        let m = pose_metrics(&gt, &gt, &Default::default()).unwrap();
        assert_eq!((m.rra, m.rta, m.auc, m.pairs), (100.0, 100.0, 100.0, 15));
    }

    #[test]
    fn auc_steps() {
        assert_eq!(auc(&[0.5, 0.5], 30), 100.0);
        assert_eq!(auc(&[40.0], 30), 0.0);
        // Below τ for τ = 11..30.
        assert!((auc(&[10.0], 30) - 100.0 * 20.0 / 30.0).abs() < 1e-12);
    }

    #[test]
    fn stationary_pairs_are_excluded_from_rta() {
        let mut gt = line(3);
        gt.poses[1] = gt.poses[0];
        let m = pose_metrics(&gt, &gt, &Default::default()).unwrap();
        assert_eq!(m.translation_excluded, 1);
        assert_eq!(m.rta, 100.0);
    }

    #[test]
    fn windowed_pairs() {
        let gt = line(5);
        let opts = PoseMetricOptions {
            pairs: PairSelection::Window(1),
            ..Default::default()
        };
        assert_eq!(pose_metrics(&gt, &gt, &opts).unwrap().pairs, 4);
    }

    #[test]
    fn mismatched_ids_and_bad_rotations() {
        let gt = line(3);
        let mut other = gt.clone();
        other.frame_ids[2] = 9;
        assert!(matches!(pose_metrics(&other, &gt, &Default::default()), Err(EvalError::FrameMismatch)));
        let mut m = Matrix4::identity();
        m[(0, 0)] = 1.1;
        assert!(PoseSet::from_matrices(vec![0, 1], &[m, Matrix4::identity()]).is_err());
        assert!(matches!(PoseSet::sequential(vec![Isometry3::identity()]), Err(EvalError::TooFewPoses(1))));
    }

    #[test]
    fn rotation_angle_is_accurate_for_tiny_angles() {
        let q = UnitQuaternion::from_axis_angle(&Vector3::x_axis(), 1e-9);
        assert!((rotation_angle(&q) - 1e-9).abs() < 1e-20);
        let q = UnitQuaternion::from_axis_angle(&Vector3::y_axis(), 3.0);
        assert!((rotation_angle(&q) - 3.0).abs() < 1e-12);
    }
}
