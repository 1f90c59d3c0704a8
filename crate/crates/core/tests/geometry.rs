use bronchosim::geometry::primitives::{capped_cylinder, icosphere};
use bronchosim::geometry::{laplacian_smooth, Bvh, TriangleMesh};
use nalgebra::{Point3, Vector3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Plane intersection followed by an edge-function inside test.
fn brute_hit(mesh: &TriangleMesh, o: &Point3<f64>, d: &Vector3<f64>, t_max: f64) -> Option<(f64, usize)> {
    let mut best: Option<(f64, usize)> = None;
    for i in 0..mesh.triangles.len() {
        let [a, b, c] = mesh.triangle(i);
        let n = (b - a).cross(&(c - a));
        let denom = n.dot(d);
        if denom.abs() < 1e-300 {
            continue;
        }
        let t = n.dot(&(a - o)) / denom;
        if !(t > 1e-6 && t <= t_max) {
            continue;
        }
        let p = o + d * t;
        let e0 = (b - a).cross(&(p - a)).dot(&n);
        let e1 = (c - b).cross(&(p - b)).dot(&n);
        let e2 = (a - c).cross(&(p - c)).dot(&n);
        let inside = (e0 >= 0.0 && e1 >= 0.0 && e2 >= 0.0) || (e0 <= 0.0 && e1 <= 0.0 && e2 <= 0.0);
        if inside && best.map_or(true, |(bt, _)| t < bt) {
            best = Some((t, i));
        }
    }
    best
}

fn random_soup(rng: &mut ChaCha8Rng, n: usize) -> TriangleMesh {
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for i in 0..n {
        let c = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        for _ in 0..3 {
            let off = Vector3::new(rng.gen_range(-0.2..0.2), rng.gen_range(-0.2..0.2), rng.gen_range(-0.2..0.2));
            vertices.push(Point3::from(c + off));
        }
        triangles.push([3 * i as u32, 3 * i as u32 + 1, 3 * i as u32 + 2]);
    }
    TriangleMesh::new(vertices, triangles)
}

fn check_rays(mesh: &TriangleMesh, rays: usize, seed: u64) {
    let bvh = Bvh::build(mesh);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = 0;
    for _ in 0..rays {
        let o = Point3::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
        let d = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)).normalize();
        let h = bvh.raycast(&o, &d, 10.0);
        match brute_hit(mesh, &o, &d, 10.0) {
            Some((t, tri)) => {
                assert!(h.hit, "bvh missed a hit at t={t}");
                assert!(
                    h.triangle == tri || (h.t - t).abs() <= 1e-9 * t.max(1.0),
                    "t {} vs {}, tri {} vs {}",
                    h.t,
                    t,
                    h.triangle,
                    tri
                );
                assert!((h.normal.norm() - 1.0).abs() < 1e-6);
                assert!(h.t >= 0.0);
                hits += 1;
            }
            None => assert!(!h.hit, "bvh reported a spurious hit at t={}", h.t),
        }
    }
    assert!(hits > rays / 20, "too few hits to be meaningful: {hits}");
}

#[test]
fn raycast_matches_brute_force_on_sphere() {
    check_rays(&icosphere(1.0, 3), 10_000, 7);
}

#[test]
fn raycast_matches_brute_force_on_triangle_soup() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let soup = random_soup(&mut rng, 400);
    check_rays(&soup, 10_000, 8);
}

#[test]
fn raycast_matches_brute_force_on_cylinder() {
    check_rays(&capped_cylinder(0.5, -1.0, 1.0, 32, 8), 5_000, 9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn smoothing_preserves_connectivity(
        sub in 0u32..3,
        iters in 0usize..6,
        lambda in 0.01f64..1.0,
    ) {
        let m = icosphere(1.0, sub);
        let out = laplacian_smooth(&m, iters, lambda);
        prop_assert_eq!(out.vertices.len(), m.vertices.len());
        prop_assert_eq!(&out.triangles, &m.triangles);
    }
}
