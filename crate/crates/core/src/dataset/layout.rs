//! Directory layout of a dataset room: `root/<patient>/<sequence>/<modality>/NNNN.ext`.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::DatasetError;

pub const FORMAT_VERSION: u32 = 1;
pub const ROOM_MANIFEST: &str = "room_manifest.json";
pub const MAX_FRAMES: usize = 10_000;

const MANIFEST_JSON: &str = include_str!("../../docs/layout_manifest.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Modality {
    Rgb,
    Depth,
    Normals,
    Flow,
    PointCloud,
}

impl Modality {
    pub const ALL: [Modality; 5] = [Modality::Rgb, Modality::Depth, Modality::Normals, Modality::Flow, Modality::PointCloud];

    pub fn name(self) -> &'static str {
        match self {
            Modality::Rgb => "rgb",
            Modality::Depth => "depth",
            Modality::Normals => "normals",
            Modality::Flow => "flow",
            Modality::PointCloud => "point_cloud",
        }
    }

    pub fn dir(self) -> &'static str {
        match self {
            Modality::Rgb => "rgb",
            Modality::Depth => "depth",
            Modality::Normals => "surface_normals",
            Modality::Flow => "optical_flow",
            Modality::PointCloud => "point_clouds",
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            Modality::Rgb => "png",
            Modality::Depth | Modality::Normals => "pfm",
            Modality::Flow => "flo",
            Modality::PointCloud => "ply",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Presence {
    EveryFrame,
    AllButLast,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModalitySpec {
    pub name: String,
    pub dir: String,
    pub extension: String,
    pub presence: Presence,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileGroup {
    pub dir: String,
    pub required: Vec<String>,
    #[serde(default)]
    pub optional: Vec<String>,
}

/// Machine-readable description of the layout, shipped with the crate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayoutManifest {
    pub format_version: u32,
    pub root_files: Vec<String>,
    pub sequence_path: String,
    pub frame_index_digits: usize,
    pub modalities: Vec<ModalitySpec>,
    pub calibration: FileGroup,
    pub metadata: FileGroup,
}

impl LayoutManifest {
    pub fn shipped() -> &'static LayoutManifest {
        static M: OnceLock<LayoutManifest> = OnceLock::new();
        M.get_or_init(|| serde_json::from_str(MANIFEST_JSON).expect("shipped layout manifest parses"))
    }

    pub fn raw() -> &'static str {
        MANIFEST_JSON
    }

    pub fn modality(&self, m: Modality) -> &ModalitySpec {
        self.modalities.iter().find(|s| s.name == m.name()).expect("every modality is in the manifest")
    }
}

fn check_id(kind: &str, id: &str) -> Result<(), DatasetError> {
    if id.is_empty() || id.starts_with('.') || id.contains(['/', '\\']) {
        return Err(DatasetError::InvalidLayout(format!("{kind} id {id:?} is not a plain directory name")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SequenceLayout {
    pub root: PathBuf,
    pub patient: String,
    pub sequence: String,
}

impl SequenceLayout {
    pub fn new(root: impl Into<PathBuf>, patient: &str, sequence: &str) -> Result<Self, DatasetError> {
        check_id("patient", patient)?;
        check_id("sequence", sequence)?;
        Ok(Self {
            root: root.into(),
            patient: patient.to_string(),
            sequence: sequence.to_string(),
        })
    }

    /// Layout of an existing sequence directory `root/<patient>/<sequence>`.
    pub fn from_sequence_dir(dir: &Path) -> Result<Self, DatasetError> {
        let name = |p: Option<&Path>| p.and_then(|p| p.file_name()).and_then(|n| n.to_str()).map(str::to_string);
        let sequence = name(Some(dir)).ok_or_else(|| DatasetError::InvalidLayout(format!("{} has no sequence name", dir.display())))?;
        let patient_dir = dir.parent();
        let patient = name(patient_dir).ok_or_else(|| DatasetError::InvalidLayout(format!("{} has no patient directory", dir.display())))?;
        let root = patient_dir.and_then(Path::parent).map(Path::to_path_buf).unwrap_or_default();
        Self::new(root, &patient, &sequence)
    }

    pub fn dir(&self) -> PathBuf {
        self.root.join(&self.patient).join(&self.sequence)
    }

    pub fn modality_dir(&self, m: Modality) -> PathBuf {
        self.dir().join(m.dir())
    }

    pub fn frame_path(&self, m: Modality, index: usize) -> PathBuf {
        self.modality_dir(m).join(frame_file_name(index, m.extension()))
    }

    pub fn calibration_dir(&self) -> PathBuf {
        self.dir().join(&LayoutManifest::shipped().calibration.dir)
    }

    pub fn metadata_dir(&self) -> PathBuf {
        self.dir().join(&LayoutManifest::shipped().metadata.dir)
    }

    pub fn create_dirs(&self) -> Result<(), DatasetError> {
        let dirs = Modality::ALL
            .iter()
            .map(|&m| self.modality_dir(m))
            .chain([self.calibration_dir(), self.metadata_dir()]);
        for d in dirs {
            fs::create_dir_all(&d).map_err(|source| DatasetError::Io { path: d.clone(), source })?;
        }
        Ok(())
    }
}

pub fn frame_file_name(index: usize, extension: &str) -> String {
    format!("{index:04}.{extension}")
}

/// Index of a `NNNN.ext` file name.
pub fn parse_frame_index(name: &str, extension: &str) -> Option<usize> {
    let stem = name.strip_suffix(extension)?.strip_suffix('.')?;
    (stem.len() == 4 && stem.bytes().all(|b| b.is_ascii_digit())).then(|| stem.parse().ok())?
}
