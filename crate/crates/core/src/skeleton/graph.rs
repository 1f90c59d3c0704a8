//! Centerline graph built from medial points.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use nalgebra::{Matrix3, Point3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use super::medial::MedialPointSet;
use crate::error::SkeletonError;

/// Clusters absorb points within this multiple of the point's radius.
pub const CLUSTER_BIN_FACTOR: f64 = 0.5;
/// Clusters link when closer than this multiple of the larger bin.
const LINK_FACTOR: f64 = 2.5;
pub const DEFAULT_PRUNE_LENGTH: f64 = 4e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Endpoint,
    Bifurcation,
    Internal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkeletonNode {
    pub position: Point3<f64>,
    pub radius: f64,
    pub kind: NodeKind,
}

/// Polyline between two graph nodes; `points[0]` is node `start`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub start: usize,
    pub end: usize,
    pub points: Vec<Point3<f64>>,
    pub radii: Vec<f64>,
    pub length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkeletonGraph {
    pub nodes: Vec<SkeletonNode>,
    pub branches: Vec<Branch>,
    /// Share of medial points that fell outside the kept component.
    pub discarded_fraction: f64,
}

fn polyline_length(points: &[Point3<f64>]) -> f64 {
    points.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
}

impl Branch {
    pub fn new(start: usize, end: usize, points: Vec<Point3<f64>>, radii: Vec<f64>) -> Self {
        let length = polyline_length(&points);
        Self {
            start,
            end,
            points,
            radii,
            length,
        }
    }

    pub fn min_radius(&self) -> f64 {
        self.radii.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn reversed(&self) -> Branch {
        let mut points = self.points.clone();
        let mut radii = self.radii.clone();
        points.reverse();
        radii.reverse();
        Branch {
            start: self.end,
            end: self.start,
            points,
            radii,
            length: self.length,
        }
    }
}

impl SkeletonGraph {
    pub fn count(&self, kind: NodeKind) -> usize {
        self.nodes.iter().filter(|n| n.kind == kind).count()
    }

    pub fn degree(&self, node: usize) -> usize {
        self.branches
            .iter()
            .map(|b| (b.start == node) as usize + (b.end == node) as usize)
            .sum()
    }

    /// Moves each bifurcation to the least-squares meeting point of its
    /// branch axes, fitted outside the junction ball, and straightens the
    /// branch ends inside that ball.
    pub fn recenter_junctions(&mut self) {
        for v in 0..self.nodes.len() {
            if self.nodes[v].kind != NodeKind::Bifurcation {
                continue;
            }
            let (origin, r) = (self.nodes[v].position, self.nodes[v].radius);
            let mut normal = Matrix3::zeros();
            let mut rhs = Vector3::zeros();
            let mut lines = 0;
            for (_, b) in self.outgoing(v) {
                let window: Vec<Point3<f64>> = b
                    .points
                    .iter()
                    .copied()
                    .filter(|p| (p - origin).norm() >= r && (p - origin).norm() <= 3.0 * r)
                    .collect();
                let Some(axis) = fit_line(&window) else {
                    continue;
                };
                let proj = Matrix3::identity() - axis.1 * axis.1.transpose();
                normal += proj;
                rhs += proj * axis.0.coords;
                lines += 1;
            }
            if lines < 2 {
                continue;
            }
            let Some(x) = normal.lu().solve(&rhs) else {
                continue;
            };
            let center = Point3::from(x);
            if (center - origin).norm() > 2.0 * r || !normal.determinant().is_finite() || normal.determinant().abs() < 1e-6 {
                continue;
            }
            for b in self.branches.iter_mut() {
                for at_start in [true, false] {
                    if (if at_start { b.start } else { b.end }) != v {
                        continue;
                    }
                    if at_start {
                        b.points.reverse();
                        b.radii.reverse();
                    }
                    let node_radius = *b.radii.last().unwrap();
                    let keep: Vec<usize> = (0..b.points.len() - 1).filter(|&i| i == 0 || (b.points[i] - center).norm() > r).collect();
                    let mut points: Vec<Point3<f64>> = keep.iter().map(|&i| b.points[i]).collect();
                    let mut radii: Vec<f64> = keep.iter().map(|&i| b.radii[i]).collect();
                    points.push(center);
                    radii.push(node_radius);
                    if at_start {
                        points.reverse();
                        radii.reverse();
                    }
                    *b = Branch::new(b.start, b.end, points, radii);
                }
            }
            self.nodes[v].position = center;
        }
    }

    /// Builds a graph from explicit polylines whose shared end coordinates
    /// (within `tol`) become common nodes.
    pub fn from_polylines(polylines: &[(Vec<Point3<f64>>, Vec<f64>)], tol: f64) -> Result<Self, SkeletonError> {
        let mut nodes: Vec<(Point3<f64>, f64)> = Vec::new();
        let node_of = |p: &Point3<f64>, r: f64, nodes: &mut Vec<(Point3<f64>, f64)>| {
            if let Some(i) = nodes.iter().position(|(q, _)| (q - p).norm() <= tol) {
                i
            } else {
                nodes.push((*p, r));
                nodes.len() - 1
            }
        };
        let mut branches = Vec::new();
        for (pts, radii) in polylines {
            if pts.len() < 2 || radii.len() != pts.len() {
                return Err(SkeletonError::InvalidGraph("polyline needs ≥ 2 points and one radius each".into()));
            }
            let s = node_of(&pts[0], radii[0], &mut nodes);
            let e = node_of(pts.last().unwrap(), *radii.last().unwrap(), &mut nodes);
            branches.push(Branch::new(s, e, pts.clone(), radii.clone()));
        }
        let mut g = SkeletonGraph {
            nodes: nodes
                .into_iter()
                .map(|(position, radius)| SkeletonNode {
                    position,
                    radius,
                    kind: NodeKind::Internal,
                })
                .collect(),
            branches,
            discarded_fraction: 0.0,
        };
        g.assign_kinds();
        Ok(g)
    }

    fn assign_kinds(&mut self) {
        for i in 0..self.nodes.len() {
            self.nodes[i].kind = match self.degree(i) {
                1 => NodeKind::Endpoint,
                2 => NodeKind::Internal,
                _ => NodeKind::Bifurcation,
            };
        }
    }

    /// Branches touching `node`, oriented to start there.
    pub fn outgoing(&self, node: usize) -> Vec<(usize, Branch)> {
        self.branches
            .iter()
            .enumerate()
            .filter_map(|(i, b)| {
                if b.start == node {
                    Some((i, b.clone()))
                } else if b.end == node {
                    Some((i, b.reversed()))
                } else {
                    None
                }
            })
            .collect()
    }

    pub fn bifurcations(&self) -> Vec<Point3<f64>> {
        self.nodes
            .iter()
            .filter(|n| n.kind == NodeKind::Bifurcation)
            .map(|n| n.position)
            .collect()
    }

    pub fn write_json(&self, path: &Path) -> std::io::Result<()> {
        fs::write(path, serde_json::to_string_pretty(self).expect("graph serializes"))
    }

    pub fn read_json(path: &Path) -> std::io::Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }
}

struct Cluster {
    sum: nalgebra::Vector3<f64>,
    radius_sum: f64,
    count: usize,
    bin: f64,
}

impl Cluster {
    fn center(&self) -> Point3<f64> {
        Point3::from(self.sum / self.count as f64)
    }
    fn radius(&self) -> f64 {
        self.radius_sum / self.count as f64
    }
}

/// Centroid and principal direction of a point run.
fn fit_line(points: &[Point3<f64>]) -> Option<(Point3<f64>, Vector3<f64>)> {
    if points.len() < 2 {
        return None;
    }
    let c = points.iter().fold(Vector3::zeros(), |a, p| a + p.coords) / points.len() as f64;
    let cov = points.iter().fold(Matrix3::zeros(), |a, p| {
        let d = p.coords - c;
        a + d * d.transpose()
    });
    let eig = SymmetricEigen::new(cov);
    let i = eig.eigenvalues.imax();
    let dir = eig.eigenvectors.column(i).into_owned();
    (eig.eigenvalues[i] > 0.0).then(|| (Point3::from(c), dir.normalize()))
}

fn cell_of(p: &Point3<f64>, size: f64) -> (i64, i64, i64) {
    (
        (p.x / size).floor() as i64,
        (p.y / size).floor() as i64,
        (p.z / size).floor() as i64,
    )
}

/// Greedy radius-proportional clustering, widest points first.
fn cluster(points: &MedialPointSet) -> Vec<Cluster> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| points.radii[b].total_cmp(&points.radii[a]).then(a.cmp(&b)));
    let max_bin = CLUSTER_BIN_FACTOR * points.radii[order[0]];
    let cell = max_bin.max(1e-12);
    let mut hash: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::new();
    let mut clusters: Vec<Cluster> = Vec::new();
    // Seeds stay fixed while clusters grow, keeping assignment order-stable.
    let mut seeds: Vec<Point3<f64>> = Vec::new();
    for &i in &order {
        let p = points.points[i];
        let bin = CLUSTER_BIN_FACTOR * points.radii[i];
        let (cx, cy, cz) = cell_of(&p, cell);
        let mut best: Option<(f64, usize)> = None;
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(list) = hash.get(&(cx + dx, cy + dy, cz + dz)) {
                        for &c in list {
                            let d = (seeds[c] - p).norm();
                            if d <= bin.max(clusters[c].bin) && best.map_or(true, |(bd, _)| d < bd) {
                                best = Some((d, c));
                            }
                        }
                    }
                }
            }
        }
        match best {
            Some((_, c)) => {
                let cl = &mut clusters[c];
                cl.sum += p.coords;
                cl.radius_sum += points.radii[i];
                cl.count += 1;
            }
            None => {
                hash.entry((cx, cy, cz)).or_default().push(clusters.len());
                seeds.push(p);
                clusters.push(Cluster {
                    sum: p.coords,
                    radius_sum: points.radii[i],
                    count: 1,
                    bin,
                });
            }
        }
    }
    clusters
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, mut i: usize) -> usize {
        while self.0[i] != i {
            self.0[i] = self.0[self.0[i]];
            i = self.0[i];
        }
        i
    }
    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.0[ra.max(rb)] = ra.min(rb);
        true
    }
}

/// Undirected adjacency over cluster indices.
type Adjacency = Vec<BTreeSet<usize>>;

fn path_length(centers: &[Point3<f64>], path: &[usize]) -> f64 {
    path.windows(2).map(|w| (centers[w[1]] - centers[w[0]]).norm()).sum()
}

/// Walks from `from` through `next` along degree-2 vertices to the next
/// vertex of another degree.
fn walk(adj: &Adjacency, from: usize, next: usize) -> Vec<usize> {
    let mut path = vec![from, next];
    let (mut prev, mut cur) = (from, next);
    while adj[cur].len() == 2 {
        let nxt = *adj[cur].iter().find(|&&n| n != prev).unwrap();
        if nxt == from {
            break;
        }
        path.push(nxt);
        prev = cur;
        cur = nxt;
    }
    path
}

/// Removes leaf paths shorter than `prune` hanging off a junction.
fn prune_spurs(adj: &mut Adjacency, alive: &mut [bool], centers: &[Point3<f64>], prune: f64) -> bool {
    let mut changed = false;
    for leaf in 0..adj.len() {
        if !alive[leaf] || adj[leaf].len() != 1 {
            continue;
        }
        let next = *adj[leaf].iter().next().unwrap();
        let path = walk(adj, leaf, next);
        let tail = *path.last().unwrap();
        if adj[tail].len() < 3 || path_length(centers, &path) >= prune {
            continue;
        }
        for w in path.windows(2) {
            adj[w[0]].remove(&w[1]);
            adj[w[1]].remove(&w[0]);
        }
        for &v in &path[..path.len() - 1] {
            alive[v] = false;
        }
        changed = true;
    }
    changed
}

/// Merges pairs of junction/end vertices joined by a short chain.
fn contract_short(
    adj: &mut Adjacency,
    alive: &mut [bool],
    centers: &mut [Point3<f64>],
    radii: &mut [f64],
    prune: f64,
) -> bool {
    for v in 0..adj.len() {
        if !alive[v] || adj[v].len() < 3 {
            continue;
        }
        for &n in adj[v].clone().iter() {
            let path = walk(adj, v, n);
            let tail = *path.last().unwrap();
            if tail == v || adj[tail].len() < 3 || path_length(centers, &path) >= prune {
                continue;
            }
            // Collapse the chain into `v`.
            let mid = Point3::from((centers[v].coords + centers[tail].coords) / 2.0);
            for w in path.windows(2) {
                adj[w[0]].remove(&w[1]);
                adj[w[1]].remove(&w[0]);
            }
            for &u in &path[1..] {
                for nb in std::mem::take(&mut adj[u]) {
                    adj[nb].remove(&u);
                    if nb != v {
                        adj[nb].insert(v);
                        adj[v].insert(nb);
                    }
                }
                alive[u] = false;
            }
            centers[v] = mid;
            radii[v] = radii[v].max(radii[tail]);
            return true;
        }
    }
    false
}

/// Clusters medial points, links them into a spanning tree, prunes spurs and
/// reduces the result to polyline branches.
pub fn build_centerline_graph(points: &MedialPointSet, prune_length: f64) -> Result<SkeletonGraph, SkeletonError> {
    if points.len() < 2 {
        return Err(SkeletonError::InsufficientExtent(format!(
            "{} medial point(s); need at least 2",
            points.len()
        )));
    }
    let clusters = cluster(points);
    if clusters.len() < 2 {
        return Err(SkeletonError::InsufficientExtent("all medial points fall in a single cluster".into()));
    }
    let mut centers: Vec<Point3<f64>> = clusters.iter().map(Cluster::center).collect();
    let mut radii: Vec<f64> = clusters.iter().map(Cluster::radius).collect();
    let n = clusters.len();

    // Candidate links via a spatial hash sized to the largest link distance.
    let max_link = clusters.iter().map(|c| c.bin).fold(0.0, f64::max) * LINK_FACTOR;
    let mut hash: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::new();
    for (i, c) in centers.iter().enumerate() {
        hash.entry(cell_of(c, max_link)).or_default().push(i);
    }
    let mut edges: Vec<(f64, usize, usize)> = Vec::new();
    for (i, c) in centers.iter().enumerate() {
        let (cx, cy, cz) = cell_of(c, max_link);
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    for &j in hash.get(&(cx + dx, cy + dy, cz + dz)).into_iter().flatten() {
                        if j <= i {
                            continue;
                        }
                        let d = (centers[j] - c).norm();
                        if d <= LINK_FACTOR * clusters[i].bin.max(clusters[j].bin) {
                            edges.push((d, i, j));
                        }
                    }
                }
            }
        }
    }
    // Kruskal: loops are broken at their longest edge.
    edges.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut uf = UnionFind((0..n).collect());
    let mut adj: Adjacency = vec![BTreeSet::new(); n];
    let mut rejected = 0usize;
    for &(_, i, j) in &edges {
        if uf.union(i, j) {
            adj[i].insert(j);
            adj[j].insert(i);
        } else {
            rejected += 1;
        }
    }
    if rejected > 0 {
        log::debug!("centerline graph: {rejected} loop-closing links dropped");
    }

    // Keep the component holding the most medial points.
    let mut weight: HashMap<usize, usize> = HashMap::new();
    for (i, c) in clusters.iter().enumerate() {
        *weight.entry(uf.find(i)).or_default() += c.count;
    }
    let (&keep, &kept) = weight.iter().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0))).unwrap();
    let discarded_fraction = 1.0 - kept as f64 / points.len() as f64;
    if discarded_fraction > 0.0 {
        log::warn!(
            "centerline graph: discarded {:.1}% of medial points outside the main component",
            100.0 * discarded_fraction
        );
    }
    let mut alive: Vec<bool> = (0..n).map(|i| uf.find(i) == keep).collect();
    for i in 0..n {
        if !alive[i] {
            adj[i].clear();
        }
    }
    if alive.iter().filter(|&&a| a).count() < 2 {
        return Err(SkeletonError::InsufficientExtent("main component has a single cluster".into()));
    }

    loop {
        let pruned = prune_spurs(&mut adj, &mut alive, &centers, prune_length);
        let contracted = contract_short(&mut adj, &mut alive, &mut centers, &mut radii, prune_length);
        if !pruned && !contracted {
            break;
        }
    }

    // Reduce to polylines between vertices of degree ≠ 2.
    let key: Vec<usize> = (0..n).filter(|&i| alive[i] && adj[i].len() != 2).collect();
    let mut node_index: HashMap<usize, usize> = HashMap::new();
    let mut nodes = Vec::new();
    for &v in &key {
        node_index.insert(v, nodes.len());
        nodes.push(SkeletonNode {
            position: centers[v],
            radius: radii[v],
            kind: NodeKind::Internal,
        });
    }
    let mut seen: BTreeSet<(usize, usize)> = BTreeSet::new();
    let mut branches = Vec::new();
    for &v in &key {
        for &nb in &adj[v] {
            let path = walk(&adj, v, nb);
            let tail = *path.last().unwrap();
            let id = (path[1].min(path[path.len() - 2]), path[1].max(path[path.len() - 2]));
            let sig = if path.len() == 2 { (v.min(tail), v.max(tail)) } else { id };
            if !seen.insert(sig) {
                continue;
            }
            let Some(&end) = node_index.get(&tail) else {
                continue;
            };
            branches.push(Branch::new(
                node_index[&v],
                end,
                path.iter().map(|&u| centers[u]).collect(),
                path.iter().map(|&u| radii[u]).collect(),
            ));
        }
    }
    if branches.is_empty() {
        return Err(SkeletonError::InsufficientExtent("no branch survived pruning".into()));
    }
    let mut graph = SkeletonGraph {
        nodes,
        branches,
        discarded_fraction,
    };
    graph.assign_kinds();
    graph.recenter_junctions();
    Ok(graph)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;

    fn set_from(points: Vec<Point3<f64>>, radius: f64) -> MedialPointSet {
        let n = points.len();
        MedialPointSet {
            points,
            radii: vec![radius; n],
            sources: (0..n).collect(),
            dropped: 0,
        }
    }

    fn line(a: Point3<f64>, b: Point3<f64>, n: usize) -> Vec<Point3<f64>> {
        (0..n).map(|i| a + (b - a) * (i as f64 / (n - 1) as f64)).collect()
    }

    #[test]
    fn straight_line_gives_one_branch() {
        let pts = line(Point3::origin(), Point3::new(0.0, 0.0, 0.04), 400);
        let g = build_centerline_graph(&set_from(pts, 0.004), DEFAULT_PRUNE_LENGTH).unwrap();
        assert_eq!(g.branches.len(), 1);
        assert_eq!(g.count(NodeKind::Endpoint), 2);
        assert_eq!(g.count(NodeKind::Bifurcation), 0);
        assert!(g.branches[0].length > 0.035);
    }

    #[test]
    fn y_shape_gives_one_bifurcation() {
        let j = Point3::new(0.0, 0.0, 0.03);
        let mut pts = line(Point3::origin(), j, 300);
        pts.extend(line(j, j + Vector3::new(-0.014, 0.0, 0.02), 250));
        pts.extend(line(j, j + Vector3::new(0.014, 0.0, 0.02), 250));
        let g = build_centerline_graph(&set_from(pts, 0.004), DEFAULT_PRUNE_LENGTH).unwrap();
        assert_eq!(g.count(NodeKind::Bifurcation), 1);
        assert_eq!(g.count(NodeKind::Endpoint), 3);
        assert_eq!(g.branches.len(), 3);
        for b in &g.branches {
            assert!(b.length >= DEFAULT_PRUNE_LENGTH);
        }
        let junction = g.bifurcations()[0];
        assert!((junction - j).norm() < 1e-4, "{junction:?}");
    }

    #[test]
    fn short_spur_is_pruned() {
        let mut pts = line(Point3::origin(), Point3::new(0.0, 0.0, 0.04), 400);
        pts.extend(line(Point3::new(0.0, 0.0, 0.02), Point3::new(0.003, 0.0, 0.02), 30));
        let g = build_centerline_graph(&set_from(pts, 0.002), DEFAULT_PRUNE_LENGTH).unwrap();
        assert_eq!(g.count(NodeKind::Bifurcation), 0);
        assert_eq!(g.count(NodeKind::Endpoint), 2);
    }

    #[test]
    fn single_cluster_is_insufficient() {
        let pts = vec![Point3::origin(), Point3::new(1e-4, 0.0, 0.0), Point3::new(0.0, 1e-4, 0.0)];
        let err = build_centerline_graph(&set_from(pts, 0.004), DEFAULT_PRUNE_LENGTH).unwrap_err();
        assert!(matches!(err, SkeletonError::InsufficientExtent(_)));
    }

    #[test]
    fn far_outliers_are_discarded() {
        let mut pts = line(Point3::origin(), Point3::new(0.0, 0.0, 0.04), 400);
        pts.extend(line(Point3::new(0.1, 0.0, 0.0), Point3::new(0.1, 0.0, 0.01), 40));
        let g = build_centerline_graph(&set_from(pts, 0.004), DEFAULT_PRUNE_LENGTH).unwrap();
        assert_eq!(g.branches.len(), 1);
        assert!((g.discarded_fraction - 40.0 / 440.0).abs() < 1e-12);
    }

    #[test]
    fn json_roundtrip() {
        let g = SkeletonGraph::from_polylines(
            &[(vec![Point3::origin(), Point3::new(0.0, 0.0, 1.0)], vec![0.1, 0.1])],
            1e-9,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.json");
        g.write_json(&p).unwrap();
        assert_eq!(SkeletonGraph::read_json(&p).unwrap(), g);
    }
}
