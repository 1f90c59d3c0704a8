use std::collections::HashMap;

use nalgebra::Point3;

use crate::error::PlannerError;
use crate::render::PointCloud;

type Cell = (i64, i64, i64);

/// Point map with a uniform hash grid sized to the robot radius, so every
/// point within one radius lies in the 27 surrounding cells.
#[derive(Debug, Clone)]
pub struct LocalMap {
    points: Vec<Point3<f64>>,
    robot_radius: f64,
    cells: HashMap<Cell, Vec<usize>>,
}

impl LocalMap {
    pub fn new(points: impl IntoIterator<Item = Point3<f64>>, robot_radius: f64) -> Result<Self, PlannerError> {
        if !(robot_radius > 0.0) || !robot_radius.is_finite() {
            return Err(PlannerError::InvalidParam(format!("robot radius must be positive, got {robot_radius}")));
        }
        let points: Vec<Point3<f64>> = points.into_iter().filter(|p| p.coords.iter().all(|c| c.is_finite())).collect();
        let mut cells: HashMap<Cell, Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(cell_of(p, robot_radius)).or_default().push(i);
        }
        Ok(Self { points, robot_radius, cells })
    }

    pub fn from_cloud(cloud: &PointCloud, robot_radius: f64) -> Result<Self, PlannerError> {
        Self::new(cloud.points.iter().copied(), robot_radius)
    }

    pub fn robot_radius(&self) -> f64 {
        self.robot_radius
    }

    pub fn points(&self) -> &[Point3<f64>] {
        &self.points
    }

    /// Distance to the nearest point if it is closer than the robot radius.
    pub fn nearest_within_radius(&self, p: &Point3<f64>) -> Option<f64> {
        let (cx, cy, cz) = cell_of(p, self.robot_radius);
        let mut best = f64::INFINITY;
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(ids) = self.cells.get(&(cx + dx, cy + dy, cz + dz)) {
                        for &i in ids {
                            best = best.min((self.points[i] - p).norm());
                        }
                    }
                }
            }
        }
        (best < self.robot_radius).then_some(best)
    }

    /// How far a sphere of robot radius at `p` overlaps the cloud.
    pub fn penetration(&self, p: &Point3<f64>) -> f64 {
        self.nearest_within_radius(p).map_or(0.0, |d| self.robot_radius - d)
    }

    pub fn is_free(&self, p: &Point3<f64>) -> bool {
        self.nearest_within_radius(p).is_none()
    }

    /// Exhaustive nearest distance, for verification.
    pub fn brute_force_clearance(&self, p: &Point3<f64>) -> f64 {
        self.points.iter().map(|q| (q - p).norm()).fold(f64::INFINITY, f64::min)
    }
}

fn cell_of(p: &Point3<f64>, size: f64) -> Cell {
    ((p.x / size).floor() as i64, (p.y / size).floor() as i64, (p.z / size).floor() as i64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn hashed_query_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts: Vec<Point3<f64>> = (0..500).map(|_| Point3::new(rng.gen(), rng.gen(), rng.gen()) * 0.02).collect();
        let map = LocalMap::new(pts, 0.002).unwrap();
        for _ in 0..500 {
            let q = Point3::new(rng.gen(), rng.gen(), rng.gen()) * 0.02;
            let exact = map.brute_force_clearance(&q);
            match map.nearest_within_radius(&q) {
                Some(d) => assert_eq!(d, exact),
                None => assert!(exact >= 0.002),
            }
        }
    }

    #[test]
    fn rejects_bad_radius_and_drops_nonfinite() {
        assert!(LocalMap::new(vec![], 0.0).is_err());
        let m = LocalMap::new(vec![Point3::new(f64::NAN, 0.0, 0.0), Point3::origin()], 1.0).unwrap();
        assert_eq!(m.points().len(), 1);
    }
}
