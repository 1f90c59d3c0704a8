//! Per-sequence JSON metadata: camera, trajectory, timestamps, robot and
//! source-volume descriptions.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{Isometry3, Quaternion, Translation3, UnitQuaternion};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::formats::write_bytes;
use super::layout::{parse_frame_index, Modality, SequenceLayout, FORMAT_VERSION};
use crate::error::DatasetError;
use crate::geometry::grid::GridSpec;
use crate::render::camera::{CameraIntrinsics, CONVENTION};
use crate::robot::{RobotConfig, RobotParams, TrajectoryLog};
use crate::skeleton::TIMESTEP;

pub const CAMERA_PARAMS: &str = "camera_params.json";
pub const TRAJECTORY: &str = "trajectory.json";
pub const TIMESTAMPS: &str = "timestamps.json";
pub const ROBOT_CONFIG: &str = "robot_config.json";
pub const CT_METADATA: &str = "ct_metadata.json";
pub const FORMATS: &str = "formats.json";
pub const POSE_CONVENTION: &str = "world-from-camera";
/// Largest quaternion norm error that is silently renormalized.
pub const QUATERNION_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraParams {
    pub width: usize,
    pub height: usize,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub convention: String,
}

impl From<&CameraIntrinsics> for CameraParams {
    fn from(c: &CameraIntrinsics) -> Self {
        Self {
            width: c.width,
            height: c.height,
            fx: c.fx,
            fy: c.fy,
            cx: c.cx,
            cy: c.cy,
            convention: CONVENTION.to_string(),
        }
    }
}

impl CameraParams {
    pub fn intrinsics(&self) -> CameraIntrinsics {
        CameraIntrinsics {
            width: self.width,
            height: self.height,
            fx: self.fx,
            fy: self.fy,
            cx: self.cx,
            cy: self.cy,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseRecord {
    pub frame_id: usize,
    pub t_sec: f64,
    pub quaternion_wxyz: [f64; 4],
    /// Meters.
    pub translation: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_cmd: Option<RobotConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_eff: Option<RobotConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tip_error: Option<f64>,
}

impl PoseRecord {
    pub fn from_pose(frame_id: usize, t_sec: f64, pose: &Isometry3<f64>) -> Self {
        let q = pose.rotation.quaternion();
        let t = pose.translation.vector;
        Self {
            frame_id,
            t_sec,
            quaternion_wxyz: [q.w, q.i, q.j, q.k],
            translation: [t.x, t.y, t.z],
            q_cmd: None,
            q_eff: None,
            tip_error: None,
        }
    }

    /// Pose with the quaternion renormalized when its norm is within
    /// [`QUATERNION_TOLERANCE`] of one.
    pub fn pose(&self) -> Result<Isometry3<f64>, String> {
        let [w, x, y, z] = self.quaternion_wxyz;
        let q = Quaternion::new(w, x, y, z);
        let norm = q.norm();
        if !((norm - 1.0).abs() <= QUATERNION_TOLERANCE) {
            return Err(format!("frame {} quaternion norm {norm} is not within {QUATERNION_TOLERANCE} of 1", self.frame_id));
        }
        if !self.translation.iter().all(|v| v.is_finite()) {
            return Err(format!("frame {} translation is not finite", self.frame_id));
        }
        let [tx, ty, tz] = self.translation;
        Ok(Isometry3::from_parts(Translation3::new(tx, ty, tz), UnitQuaternion::from_quaternion(q)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub convention: String,
    pub frames: Vec<PoseRecord>,
}

impl Trajectory {
    pub fn from_log(log: &TrajectoryLog) -> Self {
        let frames = log
            .entries
            .iter()
            .enumerate()
            .map(|(i, e)| PoseRecord {
                q_cmd: Some(e.q_cmd),
                q_eff: Some(e.q_eff),
                tip_error: Some(e.tip_error),
                ..PoseRecord::from_pose(i, e.t_sec, &e.pose)
            })
            .collect();
        Self {
            convention: POSE_CONVENTION.to_string(),
            frames,
        }
    }

    pub fn from_poses(poses: &[Isometry3<f64>]) -> Self {
        Self {
            convention: POSE_CONVENTION.to_string(),
            frames: poses.iter().enumerate().map(|(i, p)| PoseRecord::from_pose(i, tick_time(i), p)).collect(),
        }
    }
}

/// Time of frame `k` at 10 Hz, as the double nearest to k/10.
pub fn tick_time(k: usize) -> f64 {
    k as f64 / (1.0 / TIMESTEP).round()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timestamps {
    pub unit: String,
    pub step: f64,
    pub timestamps: Vec<f64>,
}

impl Timestamps {
    pub fn new(timestamps: Vec<f64>) -> Self {
        Self {
            unit: "s".into(),
            step: TIMESTEP,
            timestamps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CtMetadata {
    pub source_mask_dims: [usize; 3],
    pub spacing: [f64; 3],
    pub origin: [f64; 3],
    pub units: String,
}

impl From<&GridSpec> for CtMetadata {
    fn from(g: &GridSpec) -> Self {
        Self {
            source_mask_dims: g.dims,
            spacing: g.spacing,
            origin: g.origin,
            units: "m".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Formats {
    pub format_version: u32,
    pub rgb: String,
    pub depth: String,
    pub normals: String,
    pub flow: String,
    pub point_cloud: String,
    pub float_precision: String,
    pub point_cloud_frame: String,
    pub depth_kind: String,
    pub note: String,
}

impl Default for Formats {
    fn default() -> Self {
        Self {
            format_version: FORMAT_VERSION,
            rgb: "png".into(),
            depth: "pfm".into(),
            normals: "pfm".into(),
            flow: "flo".into(),
            point_cloud: "ply".into(),
            float_precision: "float32".into(),
            point_cloud_frame: "camera".into(),
            depth_kind: "z-depth in meters, +inf where no surface".into(),
            note: "depth and normals use little-endian PFM in place of OpenEXR".into(),
        }
    }
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<PathBuf, DatasetError> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|source| DatasetError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    bytes.push(b'\n');
    write_bytes(path, &bytes)?;
    Ok(path.to_path_buf())
}

pub(crate) fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, DatasetError> {
    let bytes = fs::read(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_slice(&bytes).map_err(|source| DatasetError::Json {
        path: path.to_path_buf(),
        source,
    })
}

/// Number of `NNNN.png` frames in the sequence's rgb directory.
pub fn frames_on_disk(layout: &SequenceLayout) -> Result<usize, DatasetError> {
    let dir = layout.modality_dir(Modality::Rgb);
    let entries = fs::read_dir(&dir).map_err(|source| DatasetError::Io { path: dir.clone(), source })?;
    let mut n = 0;
    for e in entries {
        let e = e.map_err(|source| DatasetError::Io { path: dir.clone(), source })?;
        if parse_frame_index(&e.file_name().to_string_lossy(), Modality::Rgb.extension()).is_some() {
            n += 1;
        }
    }
    Ok(n)
}

/// Writes camera, trajectory, timestamp, robot and format descriptions.
/// The trajectory must have one record per frame on disk.
pub fn write_metadata(layout: &SequenceLayout, trajectory: &Trajectory, cam: &CameraIntrinsics, params: &RobotParams) -> Result<Vec<PathBuf>, DatasetError> {
    let frames = frames_on_disk(layout)?;
    if trajectory.frames.len() != frames {
        return Err(DatasetError::CountMismatch {
            what: TRAJECTORY.into(),
            got: trajectory.frames.len(),
            expected: frames,
        });
    }
    let meta = layout.metadata_dir();
    let times = Timestamps::new(trajectory.frames.iter().map(|r| r.t_sec).collect());
    Ok(vec![
        write_json(&layout.calibration_dir().join(CAMERA_PARAMS), &CameraParams::from(cam))?,
        write_json(&meta.join(TRAJECTORY), trajectory)?,
        write_json(&meta.join(TIMESTAMPS), &times)?,
        write_json(&meta.join(ROBOT_CONFIG), params)?,
        write_json(&meta.join(FORMATS), &Formats::default())?,
    ])
}

pub fn write_sequence_metadata(layout: &SequenceLayout, log: &TrajectoryLog, cam: &CameraIntrinsics, params: &RobotParams) -> Result<Vec<PathBuf>, DatasetError> {
    write_metadata(layout, &Trajectory::from_log(log), cam, params)
}

pub fn write_ct_metadata(layout: &SequenceLayout, grid: &GridSpec) -> Result<PathBuf, DatasetError> {
    write_json(&layout.metadata_dir().join(CT_METADATA), &CtMetadata::from(grid))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;

    #[test]
    fn identity_pose_record() {
        let r = PoseRecord::from_pose(0, 0.0, &Isometry3::identity());
        assert_eq!(r.quaternion_wxyz, [1.0, 0.0, 0.0, 0.0]);
        assert_eq!(r.translation, [0.0; 3]);
    }

    #[test]
    fn pose_record_round_trip_and_tolerance() {
        let pose = Isometry3::new(Vector3::new(0.01, -0.02, 0.3), Vector3::new(0.3, -1.1, 2.0));
        let r = PoseRecord::from_pose(3, 0.3, &pose);
        let json = serde_json::to_string(&r).unwrap();
        let back: PoseRecord = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
        let p = back.pose().unwrap();
        assert!((p.to_homogeneous() - pose.to_homogeneous()).abs().max() < 1e-12);
        let mut slightly = r.clone();
        slightly.quaternion_wxyz.iter_mut().for_each(|q| *q *= 1.0005);
        assert!((slightly.pose().unwrap().rotation.angle_to(&pose.rotation)) < 1e-12);
        let mut bad = r;
        bad.quaternion_wxyz.iter_mut().for_each(|q| *q *= 1.01);
        assert!(bad.pose().is_err());
    }

    #[test]
    fn ten_hz_ticks() {
        let t: Vec<f64> = (0..50).map(tick_time).collect();
        assert_eq!(t[0], 0.0);
        assert_eq!(t[49], 4.9);
        assert_eq!(t[3], 0.3);
        assert!(t.windows(2).all(|w| ((w[1] - w[0]) - 0.1).abs() < 1e-12));
    }

    #[test]
    fn camera_params_carry_convention() {
        let c = CameraParams::from(&CameraIntrinsics::default());
        assert_eq!(c.convention, "z-forward,x-right,y-down");
        assert_eq!(c.intrinsics(), CameraIntrinsics::default());
    }
}
