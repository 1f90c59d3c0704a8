use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::anatomy::AnatomyOptions;
use crate::error::{Error, Result};
use crate::noise::NoiseParams;
use crate::phantom::Phantom;
use crate::render::{CameraIntrinsics, Material, RenderSettings};
use crate::robot::{RobotParams, TrackingOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Reconstruct,
    Skeletonize,
    Simulate,
    Render,
    Noise,
    Evaluate,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Reconstruct,
        Stage::Skeletonize,
        Stage::Simulate,
        Stage::Render,
        Stage::Noise,
        Stage::Evaluate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Reconstruct => "reconstruct",
            Stage::Skeletonize => "skeletonize",
            Stage::Simulate => "simulate",
            Stage::Render => "render",
            Stage::Noise => "noise",
            Stage::Evaluate => "evaluate",
        }
    }

    pub fn prerequisite(self) -> Option<Stage> {
        match self {
            Stage::Reconstruct => None,
            Stage::Skeletonize => Some(Stage::Reconstruct),
            Stage::Simulate => Some(Stage::Skeletonize),
            Stage::Render => Some(Stage::Simulate),
            Stage::Noise | Stage::Evaluate => Some(Stage::Render),
        }
    }

    /// Stages that consume random draws.
    pub fn is_generative(self) -> bool {
        matches!(self, Stage::Simulate | Stage::Render | Stage::Noise)
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Stage::ALL.into_iter().find(|st| st.name() == s).ok_or_else(|| format!("unknown stage {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InputSource {
    /// `<stem>.json` + `<stem>.raw` occupancy volume.
    Mask { path: PathBuf },
    /// OBJ or PLY surface.
    Mesh { path: PathBuf },
    Phantom {
        shape: Phantom,
        #[serde(default = "default_phantom_voxel")]
        voxel_size: f64,
    },
}

fn default_phantom_voxel() -> f64 {
    0.5e-3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub input: InputSource,
    pub output_root: PathBuf,
    /// Required whenever a generative stage runs.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "default_stages")]
    pub stages: Vec<Stage>,
    /// Worker threads; 0 uses all cores.
    #[serde(default)]
    pub parallelism: usize,
    #[serde(default = "default_patient")]
    pub patient: String,
    /// Truncates every sequence to this many frames.
    #[serde(default)]
    pub max_frames: Option<usize>,
    #[serde(default)]
    pub overwrite: bool,
    #[serde(default)]
    pub anatomy: AnatomyOptions,
    #[serde(default)]
    pub robot: RobotParams,
    #[serde(default)]
    pub tracking: TrackingOptions,
    #[serde(default)]
    pub camera: CameraIntrinsics,
    #[serde(default)]
    pub material: Material,
    #[serde(default)]
    pub render: RenderSettings,
    #[serde(default)]
    pub noise: NoiseParams,
    /// Spectrum archive stem; a flat spectrum is used when absent.
    #[serde(default)]
    pub noise_spectrum: Option<PathBuf>,
    #[serde(default = "default_cloud_stride")]
    pub cloud_stride: usize,
}

fn default_stages() -> Vec<Stage> {
    Stage::ALL.to_vec()
}

fn default_patient() -> String {
    "patient_000".into()
}

fn default_cloud_stride() -> usize {
    2
}

impl PipelineConfig {
    pub fn new(input: InputSource, output_root: impl Into<PathBuf>, seed: Option<u64>) -> Self {
        Self {
            input,
            output_root: output_root.into(),
            seed,
            stages: default_stages(),
            parallelism: 0,
            patient: default_patient(),
            max_frames: None,
            overwrite: false,
            anatomy: AnatomyOptions::default(),
            robot: RobotParams::default(),
            tracking: TrackingOptions::default(),
            camera: CameraIntrinsics::default(),
            material: Material::default(),
            render: RenderSettings::default(),
            noise: NoiseParams::default(),
            noise_spectrum: None,
            cloud_stride: default_cloud_stride(),
        }
    }

    /// Reads TOML, or JSON when the extension is `.json`, then applies
    /// `key.path=value` overrides. Values parse as TOML literals and fall
    /// back to plain strings.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut value: toml::Value = if path.extension().is_some_and(|e| e == "json") {
            let json: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            toml::Value::try_from(drop_nulls(json)).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        } else {
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        };
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        value.try_into().map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Applies `key.path=value` overrides to an in-memory config.
    pub fn with_overrides(self, overrides: &[String]) -> Result<Self> {
        if overrides.is_empty() {
            return Ok(self);
        }
        let mut value = toml::Value::try_from(&self).map_err(|e| Error::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        value.try_into().map_err(|e| Error::Config(e.to_string()))
    }

    /// Selected stages plus everything they depend on, in execution order.
    pub fn effective_stages(&self) -> Vec<Stage> {
        let mut set = BTreeSet::new();
        for &s in &self.stages {
            let mut cur = Some(s);
            while let Some(st) = cur {
                set.insert(st);
                cur = st.prerequisite();
            }
        }
        set.into_iter().collect()
    }

    pub fn runs(&self, stage: Stage) -> bool {
        self.effective_stages().contains(&stage)
    }

    pub fn validate(&self) -> Result<()> {
        if self.stages.is_empty() {
            return Err(Error::Config("no stages selected".into()));
        }
        match &self.input {
            InputSource::Mask { path } => {
                for p in [path.with_extension("json"), path.with_extension("raw")] {
                    if !p.is_file() {
                        return Err(Error::Config(format!("mask file {} does not exist", p.display())));
                    }
                }
            }
            InputSource::Mesh { path } => {
                if !path.is_file() {
                    return Err(Error::Config(format!("mesh file {} does not exist", path.display())));
                }
            }
            InputSource::Phantom { voxel_size, .. } => {
                if !(*voxel_size > 0.0) {
                    return Err(Error::Config(format!("phantom voxel size must be positive, got {voxel_size}")));
                }
            }
        }
        if let Some(p) = &self.noise_spectrum {
            if !p.with_extension("json").is_file() {
                return Err(Error::Config(format!("noise spectrum {} does not exist", p.display())));
            }
        }
        let stages = self.effective_stages();
        if self.seed.is_none() {
            if let Some(s) = stages.iter().find(|s| s.is_generative()) {
                return Err(Error::Config(format!("stage {s} needs a seed")));
            }
        }
        if self.patient.is_empty() || self.patient.contains(['/', '\\']) {
            return Err(Error::Config(format!("invalid patient id {:?}", self.patient)));
        }
        if self.cloud_stride == 0 || self.max_frames == Some(0) {
            return Err(Error::Config("cloud_stride and max_frames must be positive".into()));
        }
        self.robot.validate()?;
        self.camera.validate()?;
        self.render.validate()?;
        self.material.validate()?;
        self.noise.validate()?;
        Ok(())
    }
}

/// TOML has no null; an absent key means the same thing to serde.
fn drop_nulls(v: serde_json::Value) -> serde_json::Value {
    match v {
        serde_json::Value::Object(map) => map.into_iter().filter(|(_, v)| !v.is_null()).map(|(k, v)| (k, drop_nulls(v))).collect(),
        serde_json::Value::Array(items) => items.into_iter().map(drop_nulls).collect(),
        other => other,
    }
}

fn apply_override(root: &mut toml::Value, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {spec:?} is not key=value")))?;
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let mut cur = root;
    let parts: Vec<&str> = key.trim().split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let table = cur
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override {key}: {part} is not inside a table")))?;
        if i + 1 == parts.len() {
            table.insert(part.to_string(), value);
            return Ok(());
        }
        cur = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(Default::default()));
    }
    unreachable!("split yields at least one part")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::CylinderPhantom;

    fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn toml_with_overrides() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "run.toml",
            r#"
output_root = "out"
seed = 7
stages = ["skeletonize"]
[input]
kind = "phantom"
[input.shape]
kind = "cylinder"
radius = 0.005
"#,
        );
        let c = PipelineConfig::load(&p, &["render.spp=2".into(), "patient=p1".into(), "seed=9".into()]).unwrap();
        assert_eq!(c.seed, Some(9));
        assert_eq!(c.render.spp, 2);
        assert_eq!(c.patient, "p1");
        assert_eq!(
            c.input,
            InputSource::Phantom {
                shape: Phantom::Cylinder(CylinderPhantom { radius: 0.005, length: 0.04 }),
                voxel_size: 0.5e-3
            }
        );
        assert_eq!(c.effective_stages(), vec![Stage::Reconstruct, Stage::Skeletonize]);
        c.validate().unwrap();
    }

    #[test]
    fn json_config_matches_serialization() {
        let dir = tempfile::tempdir().unwrap();
        let c = PipelineConfig::new(InputSource::Phantom { shape: Phantom::Cylinder(Default::default()), voxel_size: 1e-3 }, "o", Some(1));
        let p = write(dir.path(), "run.json", &serde_json::to_string(&c).unwrap());
        assert_eq!(PipelineConfig::load(&p, &[]).unwrap(), c);
    }

    #[test]
    fn validation_errors() {
        let missing = PipelineConfig::new(InputSource::Mask { path: "/nonexistent/mask".into() }, "o", Some(1));
        assert!(matches!(missing.validate(), Err(Error::Config(m)) if m.contains("does not exist")));
        let mut unseeded = PipelineConfig::new(InputSource::Phantom { shape: Phantom::Cylinder(Default::default()), voxel_size: 1e-3 }, "o", None);
        assert!(unseeded.validate().is_err());
        unseeded.stages = vec![Stage::Skeletonize];
        unseeded.validate().unwrap();
        assert!(apply_override(&mut toml::Value::Table(Default::default()), "novalue").is_err());
        let c = unseeded.with_overrides(&["seed=4".into(), "camera.width=32".into(), "stages=[\"render\"]".into()]).unwrap();
        assert_eq!((c.seed, c.camera.width, c.stages.as_slice()), (Some(4), 32, &[Stage::Render][..]));
    }
}
