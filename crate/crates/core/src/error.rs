use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("cannot read mesh {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("unsupported mesh file {path}: {reason}")]
    Unsupported { path: PathBuf, reason: String },
    #[error("malformed mesh {path} (line/offset {location}): {reason}")]
    Malformed {
        path: PathBuf,
        location: usize,
        reason: String,
    },
    #[error("empty mesh")]
    EmptyMesh,
    #[error("no isosurface: mask is entirely empty or entirely full")]
    NoIsosurface,
    #[error("invalid voxel grid: {0}")]
    InvalidGrid(String),
    #[error("mesh is not watertight; inside/outside sign is undefined")]
    NotWatertight,
}

#[derive(Debug, Error)]
pub enum SkeletonError {
    #[error("no interior: no medial point found ({dropped} marches dropped)")]
    NoInterior { dropped: usize },
    #[error("insufficient extent: {0}")]
    InsufficientExtent(String),
    #[error("invalid skeleton graph: {0}")]
    InvalidGraph(String),
}

#[derive(Debug, Error)]
pub enum RobotError {
    #[error("q1 = {q1} outside tendon limits ±{limit}")]
    TendonOutOfRange { q1: f64, limit: f64 },
    #[error("invalid robot parameters: {0}")]
    InvalidParams(String),
    #[error("empty waypoint sequence")]
    EmptySequence,
    #[error("IK stalled at tick {tick}: tip error {error_m:.3e} m not decreasing for {ticks} ticks")]
    IkStall {
        tick: usize,
        error_m: f64,
        ticks: usize,
    },
}

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("invalid camera intrinsics: {0}")]
    InvalidCamera(String),
    #[error("invalid render setting: {0}")]
    InvalidSetting(String),
    #[error("raster size mismatch: expected {expected:?}, got {got:?}")]
    SizeMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },
}

#[derive(Debug, Error)]
pub enum NoiseError {
    #[error("no images supplied")]
    NoImages,
    #[error("image size mismatch: expected {expected:?}, got {got:?}")]
    SizeMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("invalid noise parameter: {0}")]
    InvalidParam(String),
    #[error("spectrum archive {path}: {reason}")]
    Archive { path: PathBuf, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed file {path} at byte offset {offset}: {reason}")]
    Malformed {
        path: PathBuf,
        offset: u64,
        reason: String,
    },
    #[error("incomplete bundle: missing {0}")]
    IncompleteBundle(&'static str),
    #[error("refusing to overwrite existing frame {0}")]
    WouldOverwrite(PathBuf),
    #[error("count mismatch: {what} has {got} entries, expected {expected}")]
    CountMismatch {
        what: String,
        got: usize,
        expected: usize,
    },
    #[error("missing modality {modality} for frame {frame}")]
    MissingModality { modality: &'static str, frame: usize },
    #[error("invalid layout: {0}")]
    InvalidLayout(String),
    #[error("JSON error in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("need at least two poses, got {0}")]
    TooFewPoses(usize),
    #[error("frame ids do not match between prediction and ground truth")]
    FrameMismatch,
    #[error("empty mask")]
    EmptyMask,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("non-positive median ({0}) in scale alignment")]
    NonPositiveMedian(f64),
}

#[derive(Debug, Error)]
pub enum PlannerError {
    #[error("no valid depth pixels")]
    NoValidDepth,
    #[error("start position is in collision")]
    StartInCollision,
    #[error("no feasible path after {iterations} iterations (best infeasible cost {best_cost:.4})")]
    NoFeasiblePath { iterations: usize, best_cost: f64 },
    #[error("invalid planner parameter: {0}")]
    InvalidParam(String),
}

/// Crate-wide error.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Skeleton(#[from] SkeletonError),
    #[error(transparent)]
    Robot(#[from] RobotError),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Planner(#[from] PlannerError),
    #[error("configuration: {0}")]
    Config(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
