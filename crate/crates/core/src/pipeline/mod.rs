//! Configuration-driven run of every stage, from mask or mesh ingest to a
//! validated dataset and its evaluation.

pub mod config;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::anatomy::{distance_field, skeletonize, surface_from_mask, Skeleton};
use crate::dataset::metadata::write_json;
use crate::dataset::{quantize_bundle, read_sequence, write_ct_metadata, write_frame, write_metadata, write_room_manifest, SequenceLayout, Trajectory};
use crate::error::{DatasetError, Error, Result};
use crate::eval::{pose_metrics, PoseMetricOptions, PoseMetrics, PoseSet};
use crate::geometry::{load_mesh, write_obj, GridSpec, SdfGrid, TriangleMesh, VoxelMask};
use crate::noise::{inject_noise, NoiseSpectrum};
use crate::render::{backproject_pointcloud, compute_optical_flow, render_frame, FrameBundle, RenderSettings, Scene};
use crate::robot::{track_waypoints_with, TrajectoryLog};
use crate::rng;
use crate::skeleton::WaypointSequence;

pub use config::{InputSource, PipelineConfig, Stage};

pub const REPORT_FILE: &str = "run_report.json";
pub const ANATOMY_DIR: &str = "anatomy";
pub const SIMULATION_DIR: &str = "simulation";
pub const DATASET_DIR: &str = "dataset";
pub const EVALUATION_DIR: &str = "evaluation";

/// Bronchoscopic working range for depth, m.
pub const DEPTH_WORKING_RANGE: (f64, f64) = (0.002, 0.050);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Completed,
    Failed,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: Stage,
    pub status: StageStatus,
    pub seconds: f64,
    pub counts: BTreeMap<String, f64>,
    pub warnings: Vec<String>,
    pub error: Option<String>,
}

impl StageReport {
    fn new(stage: Stage, status: StageStatus) -> Self {
        Self {
            stage,
            status,
            seconds: 0.0,
            counts: BTreeMap::new(),
            warnings: Vec::new(),
            error: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceSummary {
    pub name: String,
    /// Skeleton node the sequence ends at.
    pub endpoint: usize,
    pub frames: usize,
    pub mean_tip_error: f64,
    pub unresolved_ticks: usize,
    pub depth_pixels: usize,
    pub depth_in_range: usize,
    pub path: Option<PathBuf>,
}

impl SequenceSummary {
    pub fn depth_in_range_fraction(&self) -> f64 {
        self.depth_in_range as f64 / self.depth_pixels.max(1) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: Option<u64>,
    pub threads: usize,
    pub stages: Vec<StageReport>,
    pub sequences: Vec<SequenceSummary>,
    pub completed: bool,
}

impl RunReport {
    pub fn stage(&self, stage: Stage) -> Option<&StageReport> {
        self.stages.iter().find(|s| s.stage == stage)
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Invalid(#[source] Error),
    #[error("stage {stage} failed: {source}")]
    StageFailed {
        stage: Stage,
        report: Box<RunReport>,
        #[source]
        source: Box<Error>,
    },
}

/// Validates, then runs the selected stages and their prerequisites in
/// order. The report is written to `output_root` even when a stage fails.
pub fn run_pipeline(config: &PipelineConfig) -> Result<RunReport, PipelineError> {
    config.validate().map_err(PipelineError::Invalid)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.parallelism)
        .build()
        .map_err(|e| PipelineError::Invalid(Error::Config(format!("thread pool: {e}"))))?;
    pool.install(|| Runner::new(config).run())
}

struct Tracked {
    index: usize,
    name: String,
    waypoints: WaypointSequence,
    log: TrajectoryLog,
}

struct Runner<'a> {
    config: &'a PipelineConfig,
    report: RunReport,
    mesh: Option<TriangleMesh>,
    grid: Option<GridSpec>,
    sdf: Option<SdfGrid>,
    skeleton: Option<Skeleton>,
    tracked: Vec<Tracked>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn create_dir(path: &Path) -> Result<PathBuf> {
    fs::create_dir_all(path).map_err(io_err(path))?;
    Ok(path.to_path_buf())
}

fn write_pretty<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_json(path, value)?;
    Ok(())
}

impl<'a> Runner<'a> {
    fn new(config: &'a PipelineConfig) -> Self {
        Self {
            config,
            report: RunReport {
                seed: config.seed,
                threads: rayon::current_num_threads(),
                stages: Vec::new(),
                sequences: Vec::new(),
                completed: false,
            },
            mesh: None,
            grid: None,
            sdf: None,
            skeleton: None,
            tracked: Vec::new(),
        }
    }

    fn root(&self) -> &Path {
        &self.config.output_root
    }

    fn seed(&self) -> u64 {
        self.config.seed.expect("validated: generative stages have a seed")
    }

    fn run(mut self) -> Result<RunReport, PipelineError> {
        let selected = self.config.effective_stages();
        if let Err(e) = create_dir(&self.config.output_root) {
            return Err(PipelineError::Invalid(e));
        }
        let mut failure: Option<(Stage, Error)> = None;
        for stage in Stage::ALL {
            if !selected.contains(&stage) || failure.is_some() {
                self.report.stages.push(StageReport::new(stage, StageStatus::Skipped));
                continue;
            }
            log::info!("stage {stage}");
            let mut entry = StageReport::new(stage, StageStatus::Completed);
            let t = Instant::now();
            let outcome = match stage {
                Stage::Reconstruct => self.reconstruct(&mut entry),
                Stage::Skeletonize => self.skeletonize(&mut entry),
                Stage::Simulate => self.simulate(&mut entry),
                Stage::Render => self.render(&mut entry, selected.contains(&Stage::Noise)),
                Stage::Noise => Ok(()),
                Stage::Evaluate => self.evaluate(&mut entry),
            };
            if stage != Stage::Noise {
                entry.seconds = t.elapsed().as_secs_f64();
            }
            if let Err(e) = outcome {
                log::error!("stage {stage} failed: {e}");
                entry.status = StageStatus::Failed;
                entry.error = Some(e.to_string());
                failure = Some((stage, e));
            }
            if stage == Stage::Noise {
                if let Some(n) = self.report.stage(Stage::Render).and_then(|r| r.counts.get("noise_seconds")) {
                    entry.seconds = *n;
                }
                entry.counts.insert("beta".into(), self.config.noise.beta);
            }
            self.report.stages.push(entry);
        }
        self.report.completed = failure.is_none();
        let path = self.root().join(REPORT_FILE);
        let written = write_pretty(&path, &self.report);
        match (failure, written) {
            (Some((stage, source)), _) => Err(PipelineError::StageFailed {
                stage,
                report: Box::new(self.report),
                source: Box::new(source),
            }),
            (None, Err(e)) => Err(PipelineError::StageFailed {
                stage: Stage::Evaluate,
                report: Box::new(self.report),
                source: Box::new(e),
            }),
            (None, Ok(())) => Ok(self.report),
        }
    }

    fn reconstruct(&mut self, entry: &mut StageReport) -> Result<()> {
        let opts = &self.config.anatomy;
        let (mesh, grid) = match &self.config.input {
            InputSource::Mask { path } => {
                let mask = VoxelMask::read_raw(path)?;
                (surface_from_mask(&mask, opts)?, Some(mask.grid))
            }
            InputSource::Mesh { path } => {
                let mut mesh = load_mesh(path)?;
                mesh.ensure_normals();
                (mesh, None)
            }
            InputSource::Phantom { shape, voxel_size } => {
                let mask = shape.mask(*voxel_size, 2)?;
                (surface_from_mask(&mask, opts)?, Some(mask.grid))
            }
        };
        if !mesh.is_watertight() {
            entry.warnings.push("surface is not watertight".into());
        }
        let sdf = distance_field(&mesh, opts)?;
        let dir = create_dir(&self.root().join(ANATOMY_DIR))?;
        let obj = dir.join("lumen.obj");
        write_obj(&mesh, &obj).map_err(io_err(&obj))?;
        sdf.dump(&dir.join("sdf"))?;
        entry.counts.insert("vertices".into(), mesh.vertices.len() as f64);
        entry.counts.insert("triangles".into(), mesh.triangles.len() as f64);
        entry.counts.insert("sdf_nodes".into(), sdf.grid.len() as f64);
        self.mesh = Some(mesh);
        self.grid = grid;
        self.sdf = Some(sdf);
        Ok(())
    }

    fn skeletonize(&mut self, entry: &mut StageReport) -> Result<()> {
        let (mesh, sdf) = (self.mesh.as_ref().expect("reconstructed"), self.sdf.as_ref().expect("reconstructed"));
        let sk = skeletonize(mesh, sdf, &self.config.anatomy)?;
        let dir = create_dir(&self.root().join(ANATOMY_DIR))?;
        sk.medial.write_ply(&dir.join("medial_points.ply"))?;
        let graph = dir.join("centerline.json");
        sk.graph.write_json(&graph).map_err(io_err(&graph))?;
        write_pretty(&dir.join("waypoints.json"), &sk.sequences)?;
        entry.counts.insert("medial_points".into(), sk.medial.len() as f64);
        entry.counts.insert("branches".into(), sk.graph.branches.len() as f64);
        entry.counts.insert("sequences".into(), sk.sequences.len() as f64);
        entry.counts.insert("waypoints".into(), sk.sequences.iter().map(|s| s.len()).sum::<usize>() as f64);
        self.skeleton = Some(sk);
        Ok(())
    }

    fn simulate(&mut self, entry: &mut StageReport) -> Result<()> {
        let sdf = self.sdf.as_ref().expect("reconstructed");
        let sequences = &self.skeleton.as_ref().expect("skeletonized").sequences;
        let (seed, cfg) = (self.seed(), self.config);
        let results: Vec<_> = sequences
            .par_iter()
            .enumerate()
            .map(|(i, seq)| {
                let s = rng::derive(seed, rng::SEQUENCE, i as u64);
                (i, seq, track_waypoints_with(seq, sdf, &cfg.robot, s, &cfg.tracking))
            })
            .collect();
        let dir = create_dir(&self.root().join(SIMULATION_DIR))?;
        for (i, seq, result) in results {
            let name = format!("seq_{i:03}");
            match result {
                Ok(mut log) => {
                    if let Some(n) = cfg.max_frames {
                        log.entries.truncate(n);
                    }
                    write_pretty(&dir.join(format!("{name}.json")), &log)?;
                    let mut waypoints = seq.clone();
                    waypoints.waypoints.truncate(log.entries.len());
                    self.tracked.push(Tracked {
                        index: i,
                        name,
                        waypoints,
                        log,
                    });
                }
                Err(e) => entry.warnings.push(format!("{name}: {e}")),
            }
        }
        entry.counts.insert("sequences".into(), self.tracked.len() as f64);
        entry.counts.insert("frames".into(), self.tracked.iter().map(|t| t.log.entries.len()).sum::<usize>() as f64);
        if self.tracked.is_empty() {
            return Err(Error::Config("every sequence failed to track".into()));
        }
        self.report.sequences = self
            .tracked
            .iter()
            .map(|t| {
                let n = t.log.entries.len();
                SequenceSummary {
                    name: t.name.clone(),
                    endpoint: t.waypoints.endpoint,
                    frames: n,
                    mean_tip_error: t.log.entries.iter().map(|e| e.tip_error).sum::<f64>() / n.max(1) as f64,
                    unresolved_ticks: t.log.entries.iter().filter(|e| e.unresolved).count(),
                    depth_pixels: 0,
                    depth_in_range: 0,
                    path: None,
                }
            })
            .collect();
        Ok(())
    }

    fn render(&mut self, entry: &mut StageReport, noisy: bool) -> Result<()> {
        let cfg = self.config;
        let spectrum = match (&cfg.noise_spectrum, noisy) {
            (Some(stem), true) => Some(NoiseSpectrum::read_archive(stem)?),
            (None, true) => Some(NoiseSpectrum::from_fn(cfg.camera.width, cfg.camera.height, |_, _| 1.0)?),
            (_, false) => None,
        };
        let bvh = crate::geometry::Bvh::build(self.mesh.as_ref().expect("reconstructed"));
        let scene = Scene {
            bvh: &bvh,
            material: cfg.material,
        };
        let dataset = self.root().join(DATASET_DIR);
        let seed = self.seed();
        let noise_time = Mutex::new(Duration::ZERO);
        let ctx = SequenceContext {
            config: cfg,
            scene: &scene,
            spectrum: spectrum.as_ref(),
            grid: self.grid.as_ref(),
            seed,
            noise_time: &noise_time,
        };
        let outcomes: Vec<Result<SequenceStats>> = self
            .tracked
            .par_iter()
            .map(|t| {
                let layout = SequenceLayout::new(&dataset, &cfg.patient, &t.name)?;
                ctx.write_sequence(&layout, t)
            })
            .collect();
        let mut frames = 0;
        for (summary, outcome) in self.report.sequences.iter_mut().zip(outcomes) {
            let stats = outcome?;
            summary.depth_pixels = stats.depth_pixels;
            summary.depth_in_range = stats.depth_in_range;
            summary.path = Some(stats.dir);
            frames += summary.frames;
        }
        let manifest = write_room_manifest(&dataset)?;
        let (px, inr) = self.report.sequences.iter().fold((0, 0), |(a, b), s| (a + s.depth_pixels, b + s.depth_in_range));
        entry.counts.insert("frames".into(), frames as f64);
        entry.counts.insert("sequences".into(), manifest.patients.iter().map(|p| p.sequences.len()).sum::<usize>() as f64);
        entry.counts.insert("depth_in_range_fraction".into(), inr as f64 / px.max(1) as f64);
        if noisy {
            let t = *noise_time.lock().expect("timer lock");
            entry.counts.insert("noise_seconds".into(), t.as_secs_f64());
        }
        Ok(())
    }

    fn evaluate(&mut self, entry: &mut StageReport) -> Result<()> {
        let dir = create_dir(&self.root().join(EVALUATION_DIR))?;
        let mut results = BTreeMap::new();
        for (t, summary) in self.tracked.iter().zip(&self.report.sequences) {
            let path = summary.path.as_ref().expect("rendered");
            let seq = read_sequence(path)?;
            entry.warnings.extend(seq.warnings.iter().map(|w| format!("{}: {w}", t.name)));
            let metrics = if seq.len() >= 2 {
                let gt = PoseSet::sequential(t.waypoints.waypoints.iter().map(|w| w.pose).collect())?;
                let pred = PoseSet::sequential(seq.poses.clone())?;
                Some(pose_metrics(&pred, &gt, &PoseMetricOptions::default())?)
            } else {
                entry.warnings.push(format!("{}: single frame, no pose pairs", t.name));
                None
            };
            results.insert(
                t.name.clone(),
                SequenceEvaluation {
                    frames: seq.len(),
                    depth_in_range_fraction: summary.depth_in_range_fraction(),
                    mean_tip_error: summary.mean_tip_error,
                    tracking: metrics.map(|mut m| {
                        m.errors.clear();
                        m
                    }),
                },
            );
        }
        write_pretty(&dir.join("metrics.json"), &results)?;
        entry.counts.insert("sequences_validated".into(), results.len() as f64);
        Ok(())
    }
}

/// Achieved camera poses scored against the centerline waypoint poses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceEvaluation {
    pub frames: usize,
    pub depth_in_range_fraction: f64,
    pub mean_tip_error: f64,
    pub tracking: Option<PoseMetrics>,
}

struct SequenceStats {
    dir: PathBuf,
    depth_pixels: usize,
    depth_in_range: usize,
}

struct SequenceContext<'a> {
    config: &'a PipelineConfig,
    scene: &'a Scene<'a>,
    spectrum: Option<&'a NoiseSpectrum>,
    grid: Option<&'a GridSpec>,
    seed: u64,
    noise_time: &'a Mutex<Duration>,
}

impl SequenceContext<'_> {
    /// Renders every tick, attaches flow toward the next frame, noise and
    /// the point cloud, then writes frames and metadata.
    fn write_sequence(&self, layout: &SequenceLayout, t: &Tracked) -> Result<SequenceStats> {
        let cfg = self.config;
        layout.create_dirs()?;
        let settings = RenderSettings {
            seed: rng::derive(self.seed, rng::RENDER, t.index as u64),
            ..cfg.render
        };
        let noise_seed = rng::derive(self.seed, rng::SENSOR_NOISE, t.index as u64);
        let mut stats = SequenceStats {
            dir: layout.dir(),
            depth_pixels: 0,
            depth_in_range: 0,
        };
        let mut pending: Option<(usize, FrameBundle)> = None;
        for (k, e) in t.log.entries.iter().enumerate() {
            let next = render_frame(self.scene, &e.pose, &cfg.camera, &settings, e.t_sec)?;
            if let Some((j, mut prev)) = pending.take() {
                prev.flow = Some(compute_optical_flow(&prev.depth, &prev.pose, &next.pose, &cfg.camera, Some(&next.depth)));
                self.emit(layout, j, prev, noise_seed, &mut stats)?;
            }
            pending = Some((k, next));
        }
        if let Some((j, last)) = pending {
            self.emit(layout, j, last, noise_seed, &mut stats)?;
        }
        write_metadata(layout, &Trajectory::from_log(&t.log), &cfg.camera, &cfg.robot)?;
        if let Some(g) = self.grid {
            write_ct_metadata(layout, g)?;
        }
        Ok(stats)
    }

    fn emit(&self, layout: &SequenceLayout, index: usize, mut b: FrameBundle, noise_seed: u64, stats: &mut SequenceStats) -> Result<(), Error> {
        if let Some(spec) = self.spectrum {
            let t = Instant::now();
            b.rgb = inject_noise(&b.rgb, spec, &self.config.noise, noise_seed, index as u64)?;
            *self.noise_time.lock().expect("timer lock") += t.elapsed();
        }
        b.cloud = Some(backproject_pointcloud(&b.depth, Some(&b.rgb), &self.config.camera, None, self.config.cloud_stride));
        for d in b.depth.data.iter().filter(|d| d.is_finite()) {
            stats.depth_pixels += 1;
            stats.depth_in_range += (DEPTH_WORKING_RANGE.0..=DEPTH_WORKING_RANGE.1).contains(d) as usize;
        }
        write_frame(layout, index, &quantize_bundle(&b), self.config.overwrite).map_err(|e: DatasetError| e.into()).map(|_| ())
    }
}
