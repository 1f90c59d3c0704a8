use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::Isometry3;

use super::formats::{decode_cloud, decode_depth, decode_flow, decode_normals, decode_png, read_bytes};
use super::layout::{parse_frame_index, LayoutManifest, Modality, SequenceLayout, ROOM_MANIFEST};
use super::metadata::{read_json, CameraParams, Formats, Timestamps, Trajectory, CAMERA_PARAMS, FORMATS, TIMESTAMPS, TRAJECTORY};
use super::writer::RoomManifest;
use crate::error::DatasetError;
use crate::render::{CameraIntrinsics, FrameBundle};

/// A validated sequence directory. Frame payloads load lazily.
#[derive(Debug, Clone)]
pub struct Sequence {
    pub layout: SequenceLayout,
    pub camera: CameraIntrinsics,
    pub trajectory: Trajectory,
    pub poses: Vec<Isometry3<f64>>,
    pub timestamps: Vec<f64>,
    pub formats: Formats,
    pub warnings: Vec<String>,
}

fn scan(dir: &Path, extension: &str, warnings: &mut Vec<String>) -> Result<BTreeSet<usize>, DatasetError> {
    let io = |source| DatasetError::Io { path: dir.to_path_buf(), source };
    let mut found = BTreeSet::new();
    for e in fs::read_dir(dir).map_err(io)? {
        let name = e.map_err(io)?.file_name().to_string_lossy().into_owned();
        match parse_frame_index(&name, extension) {
            Some(i) => {
                found.insert(i);
            }
            None => warnings.push(format!("ignoring unknown file {}", dir.join(&name).display())),
        }
    }
    Ok(found)
}

fn warn_unknown(dir: &Path, known: &[&str], warnings: &mut Vec<String>) -> Result<(), DatasetError> {
    let io = |source| DatasetError::Io { path: dir.to_path_buf(), source };
    for e in fs::read_dir(dir).map_err(io)? {
        let name = e.map_err(io)?.file_name().to_string_lossy().into_owned();
        if !known.contains(&name.as_str()) {
            warnings.push(format!("ignoring unknown entry {}", dir.join(&name).display()));
        }
    }
    Ok(())
}

/// Opens `root/<patient>/<sequence>`, checking the layout invariants:
/// contiguous frame indices, every modality present (flow on all but the
/// last frame), metadata counts, strictly increasing timestamps and unit
/// quaternions. Unknown files are ignored with a warning.
pub fn read_sequence(dir: &Path) -> Result<Sequence, DatasetError> {
    let layout = SequenceLayout::from_sequence_dir(dir)?;
    let manifest = LayoutManifest::shipped();
    let mut warnings = Vec::new();

    let mut known: Vec<&str> = Modality::ALL.iter().map(|m| m.dir()).collect();
    known.extend([manifest.calibration.dir.as_str(), manifest.metadata.dir.as_str()]);
    if !dir.is_dir() {
        return Err(DatasetError::InvalidLayout(format!("{} is not a directory", dir.display())));
    }
    for d in &known {
        if !dir.join(d).is_dir() {
            return Err(DatasetError::InvalidLayout(format!("{} is missing the {d}/ directory", dir.display())));
        }
    }
    warn_unknown(dir, &known, &mut warnings)?;

    let mut indices = HashMap::new();
    for m in Modality::ALL {
        indices.insert(m, scan(&layout.modality_dir(m), m.extension(), &mut warnings)?);
    }
    let rgb = &indices[&Modality::Rgb];
    let n = rgb.len();
    if n == 0 {
        return Err(DatasetError::InvalidLayout(format!("{} has no frames", dir.display())));
    }
    if rgb.iter().enumerate().any(|(k, &i)| k != i) {
        return Err(DatasetError::InvalidLayout(format!("rgb frame indices in {} are not contiguous from 0000", dir.display())));
    }
    for m in Modality::ALL {
        let expected = if m == Modality::Flow { n - 1 } else { n };
        let have = &indices[&m];
        if let Some(frame) = (0..expected).find(|i| !have.contains(i)) {
            return Err(DatasetError::MissingModality { modality: m.name(), frame });
        }
        if let Some(&extra) = have.iter().find(|&&i| i >= expected) {
            return Err(DatasetError::InvalidLayout(format!(
                "{} has unexpected frame {extra:04} (sequence has {n} frames)",
                layout.modality_dir(m).display()
            )));
        }
    }

    let cal = layout.calibration_dir();
    let meta = layout.metadata_dir();
    warn_unknown(&cal, &manifest.calibration.required.iter().chain(&manifest.calibration.optional).map(String::as_str).collect::<Vec<_>>(), &mut warnings)?;
    warn_unknown(&meta, &manifest.metadata.required.iter().chain(&manifest.metadata.optional).map(String::as_str).collect::<Vec<_>>(), &mut warnings)?;
    for f in &manifest.metadata.required {
        if !meta.join(f).is_file() {
            return Err(DatasetError::InvalidLayout(format!("missing metadata file {}", meta.join(f).display())));
        }
    }
    let camera_params: CameraParams = read_json(&cal.join(CAMERA_PARAMS))?;
    let camera = camera_params.intrinsics();
    camera
        .validate()
        .map_err(|e| DatasetError::InvalidLayout(format!("{}: {e}", cal.join(CAMERA_PARAMS).display())))?;
    let formats: Formats = read_json(&meta.join(FORMATS))?;

    let traj_path = meta.join(TRAJECTORY);
    let trajectory: Trajectory = read_json(&traj_path)?;
    if trajectory.frames.len() != n {
        return Err(DatasetError::CountMismatch {
            what: TRAJECTORY.into(),
            got: trajectory.frames.len(),
            expected: n,
        });
    }
    let poses = trajectory
        .frames
        .iter()
        .map(|r| r.pose())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|reason| DatasetError::Malformed {
            path: traj_path.clone(),
            offset: 0,
            reason,
        })?;

    let ts_path = meta.join(TIMESTAMPS);
    let ts: Timestamps = read_json(&ts_path)?;
    if ts.timestamps.len() != n {
        return Err(DatasetError::CountMismatch {
            what: TIMESTAMPS.into(),
            got: ts.timestamps.len(),
            expected: n,
        });
    }
    if let Some(k) = ts.timestamps.windows(2).position(|w| !(w[1] > w[0])) {
        return Err(DatasetError::InvalidLayout(format!(
            "{}: non-monotone timestamps at frame {} ({} then {})",
            ts_path.display(),
            k + 1,
            ts.timestamps[k],
            ts.timestamps[k + 1]
        )));
    }

    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(Sequence {
        layout,
        camera,
        trajectory,
        poses,
        timestamps: ts.timestamps,
        formats,
        warnings,
    })
}

impl Sequence {
    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    fn load<T>(&self, m: Modality, i: usize, decode: impl Fn(&Path, &[u8]) -> Result<T, DatasetError>) -> Result<T, DatasetError> {
        let path = self.layout.frame_path(m, i);
        decode(&path, &read_bytes(&path)?)
    }

    fn check_dims(&self, m: Modality, i: usize, dims: (usize, usize)) -> Result<(), DatasetError> {
        let want = (self.camera.width, self.camera.height);
        if dims != want {
            return Err(DatasetError::Malformed {
                path: self.layout.frame_path(m, i),
                offset: 0,
                reason: format!("size {}x{} disagrees with camera {}x{}", dims.0, dims.1, want.0, want.1),
            });
        }
        Ok(())
    }

    /// Decodes every modality of frame `i`.
    pub fn frame(&self, i: usize) -> Result<FrameBundle, DatasetError> {
        if i >= self.len() {
            return Err(DatasetError::InvalidLayout(format!("frame {i} out of range 0..{}", self.len())));
        }
        let rgb = self.load(Modality::Rgb, i, decode_png)?;
        self.check_dims(Modality::Rgb, i, rgb.dims())?;
        let depth = self.load(Modality::Depth, i, decode_depth)?;
        self.check_dims(Modality::Depth, i, depth.dims())?;
        let normals = self.load(Modality::Normals, i, decode_normals)?;
        self.check_dims(Modality::Normals, i, normals.dims())?;
        let flow = if i + 1 < self.len() {
            let f = self.load(Modality::Flow, i, decode_flow)?;
            self.check_dims(Modality::Flow, i, f.flow.dims())?;
            Some(f)
        } else {
            None
        };
        let cloud = Some(self.load(Modality::PointCloud, i, decode_cloud)?);
        Ok(FrameBundle {
            rgb,
            depth,
            normals,
            flow,
            cloud,
            pose: self.poses[i],
            timestamp: self.timestamps[i],
        })
    }

    pub fn frames(&self) -> impl Iterator<Item = Result<FrameBundle, DatasetError>> + '_ {
        (0..self.len()).map(|i| self.frame(i))
    }

    pub fn path(&self) -> PathBuf {
        self.layout.dir()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub sequence: PathBuf,
    pub frames: usize,
    pub warnings: Vec<String>,
}

/// Opens the sequence and decodes every frame.
pub fn validate_sequence(dir: &Path) -> Result<ValidationReport, DatasetError> {
    let seq = read_sequence(dir)?;
    for f in seq.frames() {
        f?;
    }
    Ok(ValidationReport {
        sequence: dir.to_path_buf(),
        frames: seq.len(),
        warnings: seq.warnings,
    })
}

/// Validates every sequence listed in the room manifest and checks the
/// listed frame counts.
pub fn validate_room(root: &Path) -> Result<Vec<ValidationReport>, DatasetError> {
    let manifest: RoomManifest = read_json(&root.join(ROOM_MANIFEST))?;
    let mut reports = Vec::new();
    for p in &manifest.patients {
        for s in &p.sequences {
            let r = validate_sequence(&root.join(&p.id).join(&s.id))?;
            if r.frames != s.frames {
                return Err(DatasetError::CountMismatch {
                    what: format!("{ROOM_MANIFEST} entry {}/{}", p.id, s.id),
                    got: s.frames,
                    expected: r.frames,
                });
            }
            reports.push(r);
        }
    }
    Ok(reports)
}
