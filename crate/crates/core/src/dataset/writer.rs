use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::formats::{encode_cloud, encode_depth, encode_flow, encode_normals, encode_png, write_bytes};
use super::layout::{Modality, SequenceLayout, FORMAT_VERSION, MAX_FRAMES, ROOM_MANIFEST};
use super::metadata::{frames_on_disk, write_json};
use crate::error::DatasetError;
use crate::render::{FlowField, FrameBundle};

/// Rounds every float payload to float32 so the in-memory bundle equals
/// what the reader will decode.
pub fn quantize_bundle(b: &FrameBundle) -> FrameBundle {
    let q = |v: f64| v as f32 as f64;
    let mut out = b.clone();
    out.depth = b.depth.map(|&d| q(d));
    out.normals = b.normals.map(|n| n.map(q));
    out.flow = b.flow.as_ref().map(|f| FlowField {
        flow: f.flow.map(|v| v.map(q)),
        valid: f.valid.clone(),
    });
    if let Some(c) = out.cloud.as_mut() {
        c.points.iter_mut().for_each(|p| *p = p.map(q));
    }
    out
}

fn check_complete(bundle: &FrameBundle) -> Result<(), DatasetError> {
    let dims = bundle.rgb.dims();
    if dims.0 == 0 || dims.1 == 0 {
        return Err(DatasetError::IncompleteBundle("rgb"));
    }
    if bundle.depth.dims() != dims {
        return Err(DatasetError::IncompleteBundle("depth"));
    }
    if bundle.normals.dims() != dims {
        return Err(DatasetError::IncompleteBundle("normals"));
    }
    if bundle.cloud.is_none() {
        return Err(DatasetError::IncompleteBundle("point cloud"));
    }
    if bundle.flow.as_ref().is_some_and(|f| f.flow.dims() != dims || f.valid.dims() != dims) {
        return Err(DatasetError::IncompleteBundle("flow"));
    }
    Ok(())
}

/// Writes one frame's payloads. Flow is written when present; the last
/// frame of a sequence must carry none. Existing frames are only replaced
/// with `force`.
pub fn write_frame(layout: &SequenceLayout, index: usize, bundle: &FrameBundle, force: bool) -> Result<Vec<PathBuf>, DatasetError> {
    if index >= MAX_FRAMES {
        return Err(DatasetError::InvalidLayout(format!("frame index {index} exceeds four digits")));
    }
    check_complete(bundle)?;
    let rgb_path = layout.frame_path(Modality::Rgb, index);
    if !force && rgb_path.exists() {
        return Err(DatasetError::WouldOverwrite(rgb_path));
    }
    layout.create_dirs()?;
    let mut payloads = vec![
        (Modality::Rgb, encode_png(&bundle.rgb)),
        (Modality::Depth, encode_depth(&bundle.depth)),
        (Modality::Normals, encode_normals(&bundle.normals)),
        (Modality::PointCloud, encode_cloud(bundle.cloud.as_ref().expect("checked"))),
    ];
    if let Some(f) = &bundle.flow {
        payloads.push((Modality::Flow, encode_flow(f)));
    } else {
        let stale = layout.frame_path(Modality::Flow, index);
        if stale.exists() {
            fs::remove_file(&stale).map_err(|source| DatasetError::Io { path: stale.clone(), source })?;
        }
    }
    let mut written = Vec::with_capacity(payloads.len());
    for (m, bytes) in payloads {
        let path = layout.frame_path(m, index);
        write_bytes(&path, &bytes)?;
        written.push(path);
    }
    Ok(written)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SequenceEntry {
    pub id: String,
    pub frames: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatientEntry {
    pub id: String,
    pub sequences: Vec<SequenceEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomManifest {
    pub format_version: u32,
    pub formats: super::metadata::Formats,
    pub patients: Vec<PatientEntry>,
}

fn sorted_subdirs(dir: &Path) -> Result<Vec<String>, DatasetError> {
    let io = |source| DatasetError::Io { path: dir.to_path_buf(), source };
    let mut names = Vec::new();
    for e in fs::read_dir(dir).map_err(io)? {
        let e = e.map_err(io)?;
        if e.file_type().map_err(io)?.is_dir() {
            names.push(e.file_name().to_string_lossy().into_owned());
        }
    }
    names.sort();
    Ok(names)
}

/// Scans `root` for sequences (directories holding an rgb folder) and
/// writes the room manifest.
pub fn write_room_manifest(root: &Path) -> Result<RoomManifest, DatasetError> {
    let mut patients = Vec::new();
    for p in sorted_subdirs(root)? {
        let mut sequences = Vec::new();
        for s in sorted_subdirs(&root.join(&p))? {
            let layout = SequenceLayout::new(root, &p, &s)?;
            if layout.modality_dir(Modality::Rgb).is_dir() {
                sequences.push(SequenceEntry {
                    frames: frames_on_disk(&layout)?,
                    id: s,
                });
            }
        }
        if !sequences.is_empty() {
            patients.push(PatientEntry { id: p, sequences });
        }
    }
    let manifest = RoomManifest {
        format_version: FORMAT_VERSION,
        formats: Default::default(),
        patients,
    };
    write_json(&root.join(ROOM_MANIFEST), &manifest)?;
    Ok(manifest)
}
