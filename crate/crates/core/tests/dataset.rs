use std::fs;

use bronchosim::dataset::metadata::TIMESTAMPS;
use bronchosim::dataset::{
    quantize_bundle, read_sequence, tick_time, validate_room, validate_sequence, write_frame, write_metadata, write_room_manifest, Modality, SequenceLayout,
    Trajectory,
};
use bronchosim::error::DatasetError;
use bronchosim::render::{CameraIntrinsics, CloudFrame, FlowField, FrameBundle, PointCloud, Raster};
use bronchosim::robot::RobotParams;
use nalgebra::{Isometry3, Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn cam() -> CameraIntrinsics {
    CameraIntrinsics {
        width: 12,
        height: 9,
        fx: 10.0,
        fy: 10.0,
        cx: 6.0,
        cy: 4.5,
    }
}

fn bundle(rng: &mut ChaCha8Rng, k: usize, last: bool) -> FrameBundle {
    let c = cam();
    let n = c.pixel_count();
    let depth: Vec<f64> = (0..n).map(|i| if i % 17 == 3 { f64::INFINITY } else { rng.gen_range(0.002..0.05) }).collect();
    let normals = (0..n)
        .map(|_| {
            let v = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), -1.0).normalize();
            [v.x, v.y, v.z]
        })
        .collect();
    let mut flow = (!last).then(|| FlowField {
        flow: Raster::from_vec(c.width, c.height, (0..n).map(|_| [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)]).collect()).unwrap(),
        valid: Raster::from_vec(c.width, c.height, (0..n).map(|i| i % 5 != 0).collect()).unwrap(),
    });
    if let Some(f) = flow.as_mut() {
        for i in 0..n {
            if !f.valid.data[i] {
                f.flow.data[i] = [0.0; 2];
            }
        }
    }
    let points: Vec<Point3<f64>> = (0..20).map(|_| Point3::new(rng.gen(), rng.gen(), rng.gen())).collect();
    FrameBundle {
        rgb: Raster::from_vec(c.width, c.height, (0..n).map(|_| [rng.gen(), rng.gen(), rng.gen()]).collect()).unwrap(),
        depth: Raster::from_vec(c.width, c.height, depth).unwrap(),
        normals: Raster::from_vec(c.width, c.height, normals).unwrap(),
        flow,
        cloud: Some(PointCloud {
            colors: vec![[10, 20, 30]; points.len()],
            points,
            frame: CloudFrame::Camera,
        }),
        pose: Isometry3::new(
            Vector3::new(rng.gen(), rng.gen(), rng.gen()) * 0.05,
            Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
        ),
        timestamp: tick_time(k),
    }
}

fn write_sequence(layout: &SequenceLayout, frames: usize, seed: u64) -> Vec<FrameBundle> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bundles: Vec<FrameBundle> = (0..frames).map(|k| quantize_bundle(&bundle(&mut rng, k, k + 1 == frames))).collect();
    for (k, b) in bundles.iter().enumerate() {
        write_frame(layout, k, b, false).unwrap();
    }
    let poses: Vec<Isometry3<f64>> = bundles.iter().map(|b| b.pose).collect();
    write_metadata(layout, &Trajectory::from_poses(&poses), &cam(), &RobotParams::default()).unwrap();
    bundles
}

#[test]
fn five_frame_round_trip_is_lossless() {
    let tmp = tempfile::tempdir().unwrap();
    let layout = SequenceLayout::new(tmp.path(), "patient_01", "seq_000").unwrap();
    let written = write_sequence(&layout, 5, 1);
    let seq = read_sequence(&layout.dir()).unwrap();
    assert_eq!(seq.len(), 5);
    assert!(seq.warnings.is_empty(), "{:?}", seq.warnings);
    assert_eq!(seq.camera, cam());
    for (k, (w, r)) in written.iter().zip(seq.frames()).enumerate() {
        let r = r.unwrap();
        assert_eq!(r.rgb, w.rgb);
        assert_eq!(r.depth.data.iter().map(|d| d.to_bits()).collect::<Vec<_>>(), w.depth.data.iter().map(|d| d.to_bits()).collect::<Vec<_>>());
        assert_eq!(r.normals, w.normals);
        assert_eq!(r.flow, w.flow);
        assert_eq!(r.cloud, w.cloud);
        assert_eq!(r.timestamp, tick_time(k));
        assert!((r.pose.to_homogeneous() - w.pose.to_homogeneous()).abs().max() <= 1e-12);
    }
    assert!(!layout.frame_path(Modality::Flow, 4).exists());
    let manifest = write_room_manifest(tmp.path()).unwrap();
    assert_eq!(manifest.patients[0].sequences[0].frames, 5);
    assert_eq!(validate_room(tmp.path()).unwrap().len(), 1);
}

#[test]
fn rewriting_is_byte_identical_and_needs_force() {
    let tmp = tempfile::tempdir().unwrap();
    let layout = SequenceLayout::new(tmp.path(), "p", "s").unwrap();
    let bundles = write_sequence(&layout, 2, 3);
    let before = fs::read(layout.frame_path(Modality::Depth, 0)).unwrap();
    assert!(matches!(write_frame(&layout, 0, &bundles[0], false), Err(DatasetError::WouldOverwrite(_))));
    write_frame(&layout, 0, &bundles[0], true).unwrap();
    assert_eq!(fs::read(layout.frame_path(Modality::Depth, 0)).unwrap(), before);
}

#[test]
fn missing_normals_is_incomplete() {
    let tmp = tempfile::tempdir().unwrap();
    let layout = SequenceLayout::new(tmp.path(), "p", "s").unwrap();
    let mut b = bundle(&mut ChaCha8Rng::seed_from_u64(0), 0, true);
    b.normals = Raster::from_vec(0, 0, vec![]).unwrap();
    let err = write_frame(&layout, 0, &b, false).unwrap_err();
    assert!(err.to_string().contains("incomplete bundle"), "{err}");
}

#[test]
fn trajectory_count_must_match_frames() {
    let tmp = tempfile::tempdir().unwrap();
    let layout = SequenceLayout::new(tmp.path(), "p", "s").unwrap();
    let bundles = write_sequence(&layout, 3, 4);
    let poses: Vec<_> = bundles.iter().take(2).map(|b| b.pose).collect();
    let err = write_metadata(&layout, &Trajectory::from_poses(&poses), &cam(), &RobotParams::default()).unwrap_err();
    assert!(matches!(err, DatasetError::CountMismatch { got: 2, expected: 3, .. }), "{err}");
}

#[test]
fn corrupted_flow_magic_names_file_and_offset() {
    let tmp = tempfile::tempdir().unwrap();
    let layout = SequenceLayout::new(tmp.path(), "p", "s").unwrap();
    write_sequence(&layout, 3, 5);
    let path = layout.frame_path(Modality::Flow, 1);
    let mut bytes = fs::read(&path).unwrap();
    bytes[..4].copy_from_slice(b"XXXX");
    fs::write(&path, bytes).unwrap();
    let seq = read_sequence(&layout.dir()).unwrap();
    seq.frame(0).unwrap();
    match seq.frame(1) {
        Err(DatasetError::Malformed { path: p, offset: 0, .. }) => assert_eq!(p, path),
        other => panic!("{other:?}"),
    }
    let msg = validate_sequence(&layout.dir()).unwrap_err().to_string();
    assert!(msg.contains("0001.flo") && msg.contains("offset 0"), "{msg}");
}

#[test]
fn unknown_files_are_ignored_with_warning() {
    let tmp = tempfile::tempdir().unwrap();
    let layout = SequenceLayout::new(tmp.path(), "p", "s").unwrap();
    write_sequence(&layout, 2, 6);
    fs::write(layout.dir().join("notes.txt"), "x").unwrap();
    fs::write(layout.modality_dir(Modality::Rgb).join("thumb.jpg"), "x").unwrap();
    let seq = read_sequence(&layout.dir()).unwrap();
    assert_eq!(seq.len(), 2);
    assert_eq!(seq.warnings.len(), 2, "{:?}", seq.warnings);
}

#[test]
fn layout_violations_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let layout = SequenceLayout::new(tmp.path(), "p", "s").unwrap();
    write_sequence(&layout, 3, 7);

    let flow_last = layout.frame_path(Modality::Flow, 2);
    fs::copy(layout.frame_path(Modality::Flow, 1), &flow_last).unwrap();
    assert!(matches!(read_sequence(&layout.dir()), Err(DatasetError::InvalidLayout(_))));
    fs::remove_file(&flow_last).unwrap();

    let normals = layout.frame_path(Modality::Normals, 1);
    let saved = fs::read(&normals).unwrap();
    fs::remove_file(&normals).unwrap();
    assert!(matches!(read_sequence(&layout.dir()), Err(DatasetError::MissingModality { modality: "normals", frame: 1 })));
    fs::write(&normals, saved).unwrap();

    let ts = layout.metadata_dir().join(TIMESTAMPS);
    let good = fs::read_to_string(&ts).unwrap();
    fs::write(&ts, good.replace("0.2", "0.05")).unwrap();
    let err = read_sequence(&layout.dir()).unwrap_err();
    assert!(err.to_string().contains("non-monotone"), "{err}");
    fs::write(&ts, good).unwrap();
    read_sequence(&layout.dir()).unwrap();
}
