//! Density clustering of 2D points.

use std::collections::{HashMap, VecDeque};

use nalgebra::Point2;

/// Cluster assignment per input point; `None` marks noise.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Clustering {
    pub labels: Vec<Option<usize>>,
    pub n_clusters: usize,
}

impl Clustering {
    /// Member indices of each cluster, in index order.
    pub fn clusters(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_clusters];
        for (i, l) in self.labels.iter().enumerate() {
            if let Some(c) = l {
                out[*c].push(i);
            }
        }
        out
    }

    /// Labels in the conventional integer form, `-1` for noise.
    pub fn as_signed(&self) -> Vec<i64> {
        self.labels
            .iter()
            .map(|l| l.map_or(-1, |c| c as i64))
            .collect()
    }
}

/// Uniform grid with cell size `eps` for radius queries.
struct Grid {
    eps: f64,
    cells: HashMap<(i64, i64), Vec<usize>>,
}

impl Grid {
    fn new(points: &[Point2<f64>], eps: f64) -> Self {
        let mut cells: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(Self::cell(p, eps)).or_default().push(i);
        }
        Self { eps, cells }
    }

    fn cell(p: &Point2<f64>, eps: f64) -> (i64, i64) {
        ((p.x / eps).floor() as i64, (p.y / eps).floor() as i64)
    }

    /// Indices within `eps` of `points[i]` (inclusive, including `i`), ascending.
    fn neighbours(&self, points: &[Point2<f64>], i: usize) -> Vec<usize> {
        let p = &points[i];
        let (cx, cy) = Self::cell(p, self.eps);
        let eps2 = self.eps * self.eps;
        let mut out = Vec::new();
        for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(bucket) = self.cells.get(&(cx + dx, cy + dy)) {
                    out.extend(
                        bucket
                            .iter()
                            .copied()
                            .filter(|&j| (points[j] - p).norm_squared() <= eps2),
                    );
                }
            }
        }
        out.sort_unstable();
        out
    }
}

/// DBSCAN over `points`.
///
/// A point is core when at least `min_pts` points (itself included) lie
/// within `eps`. Clusters are grown from unvisited core points in index
/// order; a border point joins the first cluster that reaches it.
///
/// # Panics
/// If `eps` is not positive.
pub fn dbscan(points: &[Point2<f64>], eps: f64, min_pts: usize) -> Clustering {
    assert!(eps > 0.0, "dbscan eps must be positive");
    let grid = Grid::new(points, eps);
    let neighbourhoods: Vec<Vec<usize>> = (0..points.len())
        .map(|i| grid.neighbours(points, i))
        .collect();
    let is_core = |i: usize| neighbourhoods[i].len() >= min_pts;

    let mut labels: Vec<Option<usize>> = vec![None; points.len()];
    let mut n_clusters = 0;
    for seed in 0..points.len() {
        if labels[seed].is_some() || !is_core(seed) {
            continue;
        }
        let cluster = n_clusters;
        n_clusters += 1;
        labels[seed] = Some(cluster);
        let mut queue = VecDeque::from([seed]);
        while let Some(p) = queue.pop_front() {
            if !is_core(p) {
                continue;
            }
            for &q in &neighbourhoods[p] {
                if labels[q].is_none() {
                    labels[q] = Some(cluster);
                    queue.push_back(q);
                }
            }
        }
    }
    Clustering { labels, n_clusters }
}

/// One representative index per cluster (its medoid: the member minimising
/// the summed distance to the other members, lowest index on ties) plus every
/// noise point, in order of first appearance.
pub fn cluster_representatives(points: &[Point2<f64>], clustering: &Clustering) -> Vec<usize> {
    let clusters = clustering.clusters();
    let medoids: Vec<usize> = clusters.iter().map(|m| medoid(points, m)).collect();
    let mut emitted = vec![false; clustering.n_clusters];
    let mut out = Vec::new();
    for (i, l) in clustering.labels.iter().enumerate() {
        match l {
            None => out.push(i),
            Some(c) if !emitted[*c] => {
                emitted[*c] = true;
                out.push(medoids[*c]);
            }
            Some(_) => {}
        }
    }
    out
}

fn medoid(points: &[Point2<f64>], members: &[usize]) -> usize {
    let mut best = (members[0], f64::INFINITY);
    for &i in members {
        let cost: f64 = members.iter().map(|&j| (points[j] - points[i]).norm()).sum();
        if cost < best.1 {
            best = (i, cost);
        }
    }
    best.0
}
