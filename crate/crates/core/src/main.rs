use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::Point3;
use serde::Serialize;

use bronchosim::dataset::formats::{decode_depth, decode_png, encode_cloud, read_bytes};
use bronchosim::dataset::layout::{parse_frame_index, ROOM_MANIFEST};
use bronchosim::dataset::{read_sequence, validate_room, validate_sequence, Trajectory};
use bronchosim::error::Error;
use bronchosim::eval::{
    depth_metrics, format_depth_table, format_pose_table, median_scale_align, pool_depth_metrics, pose_metrics, AucCombine, DepthEvalPair,
    PairSelection, PoseMetricOptions, PoseSet,
};
use bronchosim::noise::spectrum::{DEFAULT_SIGMA_RANGE, DEFAULT_SIGMA_SPATIAL};
use bronchosim::noise::estimate_psd_rgb;
use bronchosim::phantom::{CylinderPhantom, Phantom, YPhantom};
use bronchosim::pipeline::{run_pipeline, InputSource, PipelineConfig, PipelineError, Stage};
use bronchosim::planner::{farthest_visible_point, free_goal, plan_local_path, LocalMap, PlannerParams};
use bronchosim::render::shading::srgb_decode;
use bronchosim::render::{backproject_pointcloud, Raster};
use bronchosim::robot::RobotParams;

const THREADS_ENV: &str = "BRONCHOSIM_THREADS";

#[derive(Parser)]
#[command(name = "bronchosim", version, about = "Synthetic bronchoscopy dataset engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every stage (or those listed with --stages) from a config.
    Generate(RunArgs),
    /// Reconstruct the lumen and extract centerline and waypoints.
    Skeletonize(RunArgs),
    /// Simulate and render clean sequences.
    Render(RunArgs),
    /// Estimate a noise spectrum from a directory of PNG frames.
    NoiseFit {
        images: PathBuf,
        /// Archive stem; writes <stem>.json and <stem>.f32.
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long)]
        per_channel: bool,
        #[arg(long, default_value_t = DEFAULT_SIGMA_SPATIAL)]
        sigma_spatial: f64,
        #[arg(long, default_value_t = DEFAULT_SIGMA_RANGE)]
        sigma_range: f64,
    },
    /// Relative pose accuracy between two trajectory.json files.
    EvaluatePose {
        pred: PathBuf,
        gt: PathBuf,
        /// Only pairs at most this many frames apart.
        #[arg(long)]
        window: Option<usize>,
        #[arg(long, value_enum, default_value_t = Combine::Max)]
        auc: Combine,
        /// Write metrics JSON here instead of stdout.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Depth accuracy between two directories of PFM depth maps.
    EvaluateDepth {
        pred: PathBuf,
        gt: PathBuf,
        /// Median-scale each prediction to its ground truth first.
        #[arg(long)]
        align: bool,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Plan a local path toward the farthest visible point of one frame.
    Plan {
        sequence: PathBuf,
        #[arg(long, default_value_t = 0)]
        frame: usize,
        /// Robot radius, m.
        #[arg(long, default_value_t = RobotParams::default().tip_radius)]
        radius: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output stem; writes <stem>.json and <stem>.ply.
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Validate a dataset root or a single sequence directory.
    Validate { path: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum Combine {
    Max,
    Min,
}

#[derive(Clone, Copy, ValueEnum)]
enum PhantomKind {
    Cylinder,
    Y,
}

#[derive(Args)]
struct RunArgs {
    /// TOML or JSON pipeline config.
    #[arg(short, long, conflicts_with_all = ["mask", "mesh", "phantom"])]
    config: Option<PathBuf>,
    /// Mask stem (<stem>.json + <stem>.raw).
    #[arg(long)]
    mask: Option<PathBuf>,
    #[arg(long)]
    mesh: Option<PathBuf>,
    #[arg(long, value_enum)]
    phantom: Option<PhantomKind>,
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated stage list (generate only).
    #[arg(long, value_delimiter = ',')]
    stages: Vec<Stage>,
    /// Config override, e.g. --set camera.width=300. Repeatable.
    #[arg(long = "set")]
    overrides: Vec<String>,
}

enum Failure {
    Validation(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) => Failure::Validation(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn runtime<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Runtime(e.to_string())
}

fn threads_override() -> Result<Option<usize>, Failure> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .parse()
            .map(Some)
            .map_err(|_| Failure::Validation(format!("{THREADS_ENV}={v:?} is not a thread count"))),
        Err(_) => Ok(None),
    }
}

fn build_config(args: RunArgs, default_stages: &[Stage]) -> Result<PipelineConfig, Failure> {
    let mut config = match &args.config {
        Some(path) => PipelineConfig::load(path, &args.overrides).map_err(|e| Failure::Validation(e.to_string()))?,
        None => {
            let input = match (&args.mask, &args.mesh, args.phantom) {
                (Some(m), None, None) => InputSource::Mask { path: m.clone() },
                (None, Some(m), None) => InputSource::Mesh { path: m.clone() },
                (None, None, Some(k)) => InputSource::Phantom {
                    shape: match k {
                        PhantomKind::Cylinder => Phantom::Cylinder(CylinderPhantom::default()),
                        PhantomKind::Y => Phantom::Y(YPhantom::default()),
                    },
                    voxel_size: 0.5e-3,
                },
                _ => return Err(Failure::Validation("give exactly one of --config, --mask, --mesh, --phantom".into())),
            };
            let output = args
                .output
                .clone()
                .ok_or_else(|| Failure::Validation("--output is required without --config".into()))?;
            PipelineConfig::new(input, output, args.seed).with_overrides(&args.overrides)?
        }
    };
    if let Some(o) = args.output {
        config.output_root = o;
    }
    if args.seed.is_some() {
        config.seed = args.seed;
    }
    if !args.stages.is_empty() {
        config.stages = args.stages;
    } else if !default_stages.is_empty() {
        config.stages = default_stages.to_vec();
    }
    if let Some(n) = threads_override()? {
        config.parallelism = n;
    }
    Ok(config)
}

fn run(config: PipelineConfig) -> Result<(), Failure> {
    match run_pipeline(&config) {
        Ok(report) => {
            for s in &report.stages {
                println!("{:<12} {:?} {:.2} s", s.stage.name(), s.status, s.seconds);
                for w in &s.warnings {
                    println!("  warning: {w}");
                }
            }
            println!("report: {}", config.output_root.join(bronchosim::pipeline::REPORT_FILE).display());
            Ok(())
        }
        Err(PipelineError::Invalid(e)) => Err(Failure::Validation(e.to_string())),
        Err(e) => Err(runtime(e)),
    }
}

fn emit_json<T: Serialize>(value: &T, path: Option<&Path>) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(runtime)?;
    match path {
        Some(p) => fs::write(p, text + "\n").map_err(runtime),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn read_trajectory(path: &Path) -> Result<PoseSet, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))?;
    let t: Trajectory = serde_json::from_str(&text).map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))?;
    let mut ids = Vec::with_capacity(t.frames.len());
    let mut poses = Vec::with_capacity(t.frames.len());
    for r in &t.frames {
        ids.push(r.frame_id);
        poses.push(r.pose().map_err(|e| Failure::Validation(format!("{} frame {}: {e}", path.display(), r.frame_id)))?);
    }
    PoseSet::new(ids, poses).map_err(|e| Failure::Validation(e.to_string()))
}

/// Depth maps by frame index from a sequence directory or a flat PFM directory.
fn read_depth_dir(dir: &Path) -> Result<Vec<(usize, Raster<f64>)>, Failure> {
    let dir = if dir.join("depth").is_dir() { dir.join("depth") } else { dir.to_path_buf() };
    let mut out = Vec::new();
    for e in fs::read_dir(&dir).map_err(|e| Failure::Validation(format!("{}: {e}", dir.display())))? {
        let path = e.map_err(runtime)?.path();
        let name = path.file_name().unwrap_or_default().to_string_lossy().into_owned();
        if let Some(i) = parse_frame_index(&name, "pfm") {
            out.push((i, decode_depth(&path, &read_bytes(&path).map_err(runtime)?).map_err(runtime)?));
        }
    }
    out.sort_by_key(|(i, _)| *i);
    Ok(out)
}

fn evaluate_depth(pred: &Path, gt: &Path, align: bool, json: Option<&Path>) -> Result<(), Failure> {
    let (p, g) = (read_depth_dir(pred)?, read_depth_dir(gt)?);
    if p.is_empty() || p.iter().map(|x| x.0).ne(g.iter().map(|x| x.0)) {
        return Err(Failure::Validation("prediction and ground truth must hold the same non-empty frame indices".into()));
    }
    let mut parts = Vec::with_capacity(p.len());
    for ((_, pd), (_, gd)) in p.into_iter().zip(g) {
        let pair = DepthEvalPair::new(pd, gd).map_err(|e| Failure::Validation(e.to_string()))?;
        let pair = if align {
            let (aligned, _) = median_scale_align(&pair.pred, &pair.gt, &pair.mask).map_err(runtime)?;
            DepthEvalPair::with_mask(aligned, pair.gt, pair.mask).map_err(runtime)?
        } else {
            pair
        };
        parts.push(depth_metrics(&pair));
    }
    let pooled = pool_depth_metrics(&parts).expect("non-empty masks");
    print!("{}", format_depth_table(&pred.display().to_string(), &pooled));
    emit_json(&pooled, json)
}

fn noise_fit(images: &Path, output: &Path, per_channel: bool, sigma_spatial: f64, sigma_range: f64) -> Result<(), Failure> {
    let mut paths: Vec<PathBuf> = fs::read_dir(images)
        .map_err(|e| Failure::Validation(format!("{}: {e}", images.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Failure::Validation(format!("no PNG files in {}", images.display())));
    }
    let mut frames = Vec::with_capacity(paths.len());
    for p in &paths {
        let img = decode_png(p, &read_bytes(p).map_err(runtime)?).map_err(runtime)?;
        frames.push(img.map(|px| px.map(|c| srgb_decode(c as f64 / 255.0))));
    }
    let spectrum = estimate_psd_rgb(&frames, per_channel, sigma_spatial, sigma_range).map_err(runtime)?;
    let (json, raw) = spectrum.write_archive(output).map_err(runtime)?;
    println!("{} images, {}x{}, {} channel(s)", frames.len(), spectrum.width, spectrum.height, spectrum.channels());
    println!("wrote {} and {}", json.display(), raw.display());
    Ok(())
}

#[derive(Serialize)]
struct PlanOutput {
    frame: usize,
    goal: Point3<f64>,
    target: Point3<f64>,
    path: bronchosim::planner::PlannedPath,
}

fn plan(sequence: &Path, frame: usize, radius: f64, seed: u64, output: &Path) -> Result<(), Failure> {
    let seq = read_sequence(sequence).map_err(|e| Failure::Validation(e.to_string()))?;
    if frame >= seq.len() {
        return Err(Failure::Validation(format!("frame {frame} out of range ({} frames)", seq.len())));
    }
    let bundle = seq.frame(frame).map_err(runtime)?;
    let cam = seq.camera;
    let cloud = backproject_pointcloud(&bundle.depth, None, &cam, None, 1);
    let map = LocalMap::from_cloud(&cloud, radius).map_err(|e| Failure::Validation(e.to_string()))?;
    let goal = farthest_visible_point(&bundle.depth, &cam).map_err(runtime)?;
    let start = Point3::origin();
    let target = free_goal(&map, &start, &goal).ok_or_else(|| runtime("no collision-free point on the ray to the goal"))?;
    let params = PlannerParams { seed, ..Default::default() };
    let path = plan_local_path(&map, &start, &target, &params).map_err(runtime)?;
    let ply = output.with_extension("ply");
    fs::write(&ply, encode_cloud(&path.overlay(24))).map_err(runtime)?;
    println!(
        "path: {} vertices, length {:.2} mm, clearance {:.2} mm",
        path.vertices.len(),
        path.length * 1e3,
        path.min_clearance(&map) * 1e3
    );
    emit_json(&PlanOutput { frame, goal, target, path }, Some(&output.with_extension("json")))?;
    println!("wrote {} and {}", output.with_extension("json").display(), ply.display());
    Ok(())
}

fn validate(path: &Path) -> Result<(), Failure> {
    let reports = if path.join(ROOM_MANIFEST).is_file() {
        validate_room(path)
    } else {
        validate_sequence(path).map(|r| vec![r])
    }
    .map_err(|e| Failure::Validation(e.to_string()))?;
    for r in &reports {
        println!("ok {} ({} frames)", r.sequence.display(), r.frames);
        for w in &r.warnings {
            println!("  warning: {w}");
        }
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    if let Some(n) = threads_override()? {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(runtime)?;
    }
    match cli.command {
        Command::Generate(a) => run(build_config(a, &[])?),
        Command::Skeletonize(a) => run(build_config(a, &[Stage::Skeletonize])?),
        Command::Render(a) => run(build_config(a, &[Stage::Render])?),
        Command::NoiseFit {
            images,
            output,
            per_channel,
            sigma_spatial,
            sigma_range,
        } => noise_fit(&images, &output, per_channel, sigma_spatial, sigma_range),
        Command::EvaluatePose { pred, gt, window, auc, json } => {
            let opts = PoseMetricOptions {
                pairs: window.map_or(PairSelection::All, PairSelection::Window),
                auc_combine: match auc {
                    Combine::Max => AucCombine::Max,
                    Combine::Min => AucCombine::Min,
                },
                ..Default::default()
            };
            let m = pose_metrics(&read_trajectory(&pred)?, &read_trajectory(&gt)?, &opts).map_err(|e| Failure::Validation(e.to_string()))?;
            print!("{}", format_pose_table(&pred.display().to_string(), &m, &opts));
            emit_json(&m, json.as_deref())
        }
        Command::EvaluateDepth { pred, gt, align, json } => evaluate_depth(&pred, &gt, align, json.as_deref()),
        Command::Plan {
            sequence,
            frame,
            radius,
            seed,
            output,
        } => plan(&sequence, frame, radius, seed, &output),
        Command::Validate { path } => validate(&path),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
