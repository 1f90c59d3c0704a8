use bronchosim::eval::pose::{PairSelection, MIN_TRANSLATION};
use bronchosim::eval::{depth_metrics, median_scale_align, pose_metrics, DepthEvalPair, PoseMetricOptions, PoseSet};
use bronchosim::render::Raster;
use nalgebra::{Isometry3, Matrix3, Matrix4, Translation3, UnitQuaternion, Vector3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_pose(rng: &mut impl Rng) -> Isometry3<f64> {
    let axis = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    Isometry3::new(Vector3::new(rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1)), axis * 2.0)
}

/// Perturbs each pose by a small random rotation and offset.
fn jitter(rng: &mut impl Rng, p: &Isometry3<f64>, scale: f64) -> Isometry3<f64> {
    let d = Isometry3::new(
        Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * 0.01 * scale,
        Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * 0.1 * scale,
    );
    p * d
}

struct OracleErrors {
    rot: Vec<f64>,
    trans: Vec<Option<f64>>,
}

/// Pair loop on 4x4 matrices with explicit inverses and trace-based angles.
fn brute_force(pred: &[Isometry3<f64>], gt: &[Isometry3<f64>]) -> OracleErrors {
    let m = |p: &Isometry3<f64>| p.to_homogeneous();
    let mut rot = Vec::new();
    let mut trans = Vec::new();
    for i in 0..gt.len() {
        for j in i + 1..gt.len() {
            let rp: Matrix4<f64> = m(&pred[i]).try_inverse().unwrap() * m(&pred[j]);
            let rg: Matrix4<f64> = m(&gt[i]).try_inverse().unwrap() * m(&gt[j]);
            let e: Matrix3<f64> = rp.fixed_view::<3, 3>(0, 0).transpose() * rg.fixed_view::<3, 3>(0, 0);
            let skew = Vector3::new(e[(2, 1)] - e[(1, 2)], e[(0, 2)] - e[(2, 0)], e[(1, 0)] - e[(0, 1)]).norm() / 2.0;
            rot.push(skew.atan2((e.trace() - 1.0) / 2.0).to_degrees());
            let tp = Vector3::new(rp[(0, 3)], rp[(1, 3)], rp[(2, 3)]);
            let tg = Vector3::new(rg[(0, 3)], rg[(1, 3)], rg[(2, 3)]);
            trans.push((tg.norm() >= MIN_TRANSLATION).then(|| {
                let (a, b) = (tp.normalize(), tg.normalize());
                a.cross(&b).norm().atan2(a.dot(&b)).to_degrees()
            }));
        }
    }
    OracleErrors { rot, trans }
}

fn pct(values: &[f64], t: f64) -> f64 {
    100.0 * values.iter().filter(|&&v| v < t).count() as f64 / values.len() as f64
}

#[test]
fn pose_metrics_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for trial in 0..20 {
        let gt: Vec<_> = (0..5).map(|_| random_pose(&mut rng)).collect();
        let pred: Vec<_> = gt.iter().map(|p| jitter(&mut rng, p, 0.2 + trial as f64 * 0.2)).collect();
        let got = pose_metrics(&PoseSet::sequential(pred.clone()).unwrap(), &PoseSet::sequential(gt.clone()).unwrap(), &Default::default()).unwrap();
        let o = brute_force(&pred, &gt);
        assert_eq!(got.errors.len(), o.rot.len());
        for (e, (r, t)) in got.errors.iter().zip(o.rot.iter().zip(&o.trans)) {
            assert!((e.rotation_deg - r).abs() <= 1e-12, "{} {}", e.rotation_deg, r);
            assert!((e.translation_deg.unwrap() - t.unwrap()).abs() <= 1e-12, "{:?} {:?}", e.translation_deg, t);
        }
        let trans: Vec<f64> = o.trans.iter().map(|t| t.unwrap()).collect();
        assert_eq!(got.rra, pct(&o.rot, 5.0));
        assert_eq!(got.rta, pct(&trans, 5.0));
        let worst: Vec<f64> = o.rot.iter().zip(&trans).map(|(r, t)| r.max(*t)).collect();
        let auc = (1..=30).map(|t| pct(&worst, t as f64)).sum::<f64>() / 30.0;
        assert!((got.auc - auc).abs() <= 1e-12);
        assert!((0.0..=100.0).contains(&got.auc));
    }
}

#[test]
fn pose_metrics_are_gauge_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let gt: Vec<_> = (0..8).map(|_| random_pose(&mut rng)).collect();
    let pred: Vec<_> = gt.iter().map(|p| jitter(&mut rng, p, 1.0)).collect();
    let g = random_pose(&mut rng);
    let scale = 3.7;
    let moved: Vec<_> = pred
        .iter()
        .map(|p| {
            let r: UnitQuaternion<f64> = g.rotation * p.rotation;
            let t = g.rotation * (p.translation.vector * scale) + g.translation.vector;
            Isometry3::from_parts(Translation3::from(t), r)
        })
        .collect();
    let gt_set = PoseSet::sequential(gt).unwrap();
    let a = pose_metrics(&PoseSet::sequential(pred).unwrap(), &gt_set, &Default::default()).unwrap();
    let b = pose_metrics(&PoseSet::sequential(moved).unwrap(), &gt_set, &Default::default()).unwrap();
    assert_eq!((a.rra, a.rta, a.auc), (b.rra, b.rta, b.auc));
    for (x, y) in a.errors.iter().zip(&b.errors) {
        assert!((x.rotation_deg - y.rotation_deg).abs() < 1e-9);
        assert!((x.translation_deg.unwrap() - y.translation_deg.unwrap()).abs() < 1e-9);
    }
}

#[test]
fn windowed_pairs_are_a_subset() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let gt: Vec<_> = (0..6).map(|_| random_pose(&mut rng)).collect();
    let set = PoseSet::sequential(gt).unwrap();
    let opts = PoseMetricOptions {
        pairs: PairSelection::Window(2),
        ..Default::default()
    };
    let m = pose_metrics(&set, &set, &opts).unwrap();
    assert_eq!(m.pairs, 5 + 4);
    assert!(m.errors.iter().all(|e| e.j - e.i <= 2));
}

struct DepthOracle {
    l1: f64,
    abs_rel: f64,
    rmse: f64,
    delta: [f64; 3],
}

fn depth_oracle(pred: &[f64], gt: &[f64]) -> DepthOracle {
    let (mut l1, mut rel, mut sq, mut n) = (0.0, 0.0, 0.0, 0.0);
    let mut d = [0.0; 3];
    for k in 0..gt.len() {
        if !(gt[k].is_finite() && gt[k] > 0.0) {
            continue;
        }
        n += 1.0;
        l1 += (pred[k] - gt[k]).abs();
        rel += (pred[k] - gt[k]).abs() / gt[k];
        sq += (pred[k] - gt[k]) * (pred[k] - gt[k]);
        let r = if pred[k] > gt[k] { pred[k] / gt[k] } else { gt[k] / pred[k] };
        if r < 1.25 {
            d[0] += 1.0;
        }
        if r < 1.5625 {
            d[1] += 1.0;
        }
        if r < 1.953125 {
            d[2] += 1.0;
        }
    }
    DepthOracle {
        l1: l1 / n,
        abs_rel: rel / n,
        rmse: (sq / n).sqrt(),
        delta: d.map(|v| 100.0 * v / n),
    }
}

fn random_pair(rng: &mut impl Rng, w: usize, h: usize) -> (Vec<f64>, Vec<f64>) {
    let gt: Vec<f64> = (0..w * h).map(|k| if k % 11 == 0 { f64::INFINITY } else { rng.gen_range(0.002..0.05) }).collect();
    let pred = gt.iter().map(|g| if g.is_finite() { g * rng.gen_range(0.4..2.2) } else { 0.01 }).collect();
    (pred, gt)
}

#[test]
fn depth_metrics_match_scalar_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..50 {
        let (p, g) = random_pair(&mut rng, 8, 8);
        let pair = DepthEvalPair::new(Raster::from_vec(8, 8, p.clone()).unwrap(), Raster::from_vec(8, 8, g.clone()).unwrap()).unwrap();
        let m = depth_metrics(&pair);
        let o = depth_oracle(&p, &g);
        assert!((m.l1 - o.l1).abs() <= 1e-12);
        assert!((m.abs_rel - o.abs_rel).abs() <= 1e-12);
        assert!((m.rmse - o.rmse).abs() <= 1e-12);
        assert_eq!([m.delta1, m.delta2, m.delta3], o.delta);
    }
}

#[test]
fn median_alignment_with_outlier_block_matches_sort_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let (w, h) = (10, 10);
    let gt: Vec<f64> = (0..w * h).map(|_| rng.gen_range(0.005..0.04)).collect();
    let mut pred: Vec<f64> = gt.iter().map(|g| 1.7 * g).collect();
    for y in 0..2 {
        for x in 0..5 {
            pred[y * w + x] = 5.0;
        }
    }
    let sorted_median = |v: &[f64]| {
        let mut s = v.to_vec();
        s.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = s.len();
        if n % 2 == 1 {
            s[n / 2]
        } else {
            (s[n / 2 - 1] + s[n / 2]) / 2.0
        }
    };
    let expected = sorted_median(&gt) / sorted_median(&pred);
    let g = Raster::from_vec(w, h, gt).unwrap();
    let (_, s) = median_scale_align(&Raster::from_vec(w, h, pred).unwrap(), &g, &g.map(|_| true)).unwrap();
    assert_eq!(s, expected);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]
    #[test]
    fn deltas_are_monotone(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (p, g) = random_pair(&mut rng, 6, 5);
        let m = depth_metrics(&DepthEvalPair::new(Raster::from_vec(6, 5, p).unwrap(), Raster::from_vec(6, 5, g).unwrap()).unwrap());
        prop_assert!(m.delta1 <= m.delta2 && m.delta2 <= m.delta3);
    }
}

proptest! {
    #[test]
    fn depth_metrics_ignore_pixel_order(seed in 0u64..200) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (p, g) = random_pair(&mut rng, 7, 3);
        let mut idx: Vec<usize> = (0..p.len()).collect();
        idx.reverse();
        idx.rotate_left(seed as usize % p.len());
        let pp: Vec<f64> = idx.iter().map(|&i| p[i]).collect();
        let gg: Vec<f64> = idx.iter().map(|&i| g[i]).collect();
        let a = depth_metrics(&DepthEvalPair::new(Raster::from_vec(7, 3, p).unwrap(), Raster::from_vec(7, 3, g).unwrap()).unwrap());
        let b = depth_metrics(&DepthEvalPair::new(Raster::from_vec(7, 3, pp).unwrap(), Raster::from_vec(7, 3, gg).unwrap()).unwrap());
        prop_assert!((a.l1 - b.l1).abs() < 1e-15 && (a.rmse - b.rmse).abs() < 1e-15 && (a.abs_rel - b.abs_rel).abs() < 1e-15);
        prop_assert_eq!((a.delta1, a.delta2, a.delta3), (b.delta1, b.delta2, b.delta3));
    }
}
