//! Brute-force reference implementations and random input generators used
//! to check the library's algorithms. Shared with the CLI acceptance suite.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use nalgebra::{Matrix2, Point2};
use rand::Rng;

use pasg_core::keypoints::{Keypoint2D, KeypointSource};
use pasg_core::lifting::{LiftedPoint, Vec3};
use pasg_core::mask::BinaryMask;

/// Random mask made of a few filled ellipses plus salt noise.
pub fn random_mask(rng: &mut impl Rng, w: usize, h: usize) -> BinaryMask {
    let blobs: Vec<(f64, f64, f64, f64)> = (0..rng.random_range(1..5))
        .map(|_| {
            (
                rng.random_range(0.0..w as f64),
                rng.random_range(0.0..h as f64),
                rng.random_range(1.0..(w as f64 / 2.0).max(1.5)),
                rng.random_range(1.0..(h as f64 / 2.0).max(1.5)),
            )
        })
        .collect();
    let salt = rng.random_range(0.0..0.05);
    let mut m = BinaryMask::from_fn(w, h, |x, y| {
        blobs.iter().any(|(cx, cy, rx, ry)| {
            let (dx, dy) = ((x as f64 - cx) / rx, (y as f64 - cy) / ry);
            dx * dx + dy * dy <= 1.0
        })
    });
    for y in 0..h {
        for x in 0..w {
            if rng.random_bool(salt) {
                m.set(x, y, true);
            }
        }
    }
    m
}

/// Mean of the foreground pixel coordinates.
pub fn centroid_mean(mask: &BinaryMask) -> Option<(f64, f64)> {
    let pts: Vec<(usize, usize)> = (0..mask.height())
        .flat_map(|y| (0..mask.width()).map(move |x| (x, y)))
        .filter(|&(x, y)| mask.get(x, y))
        .collect();
    if pts.is_empty() {
        return None;
    }
    let n = pts.len() as f64;
    Some((
        pts.iter().map(|p| p.0 as f64).sum::<f64>() / n,
        pts.iter().map(|p| p.1 as f64).sum::<f64>() / n,
    ))
}

/// 8-connected regions by breadth-first flood fill, as pixel sets.
pub fn flood_fill_regions(mask: &BinaryMask) -> BTreeSet<BTreeSet<(usize, usize)>> {
    let (w, h) = (mask.width(), mask.height());
    let mut seen = vec![false; w * h];
    let mut out = BTreeSet::new();
    for y0 in 0..h {
        for x0 in 0..w {
            if !mask.get(x0, y0) || seen[y0 * w + x0] {
                continue;
            }
            let mut region = BTreeSet::new();
            let mut q = VecDeque::from([(x0, y0)]);
            seen[y0 * w + x0] = true;
            while let Some((x, y)) = q.pop_front() {
                region.insert((x, y));
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                        if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                            continue;
                        }
                        let (nx, ny) = (nx as usize, ny as usize);
                        if mask.get(nx, ny) && !seen[ny * w + nx] {
                            seen[ny * w + nx] = true;
                            q.push_back((nx, ny));
                        }
                    }
                }
            }
            out.insert(region);
        }
    }
    out
}

/// Textbook DBSCAN with O(n²) neighbourhood scans. Seeds are taken in index
/// order and each cluster is fully grown before the next starts.
pub fn naive_dbscan(points: &[Point2<f64>], eps: f64, min_pts: usize) -> Vec<Option<usize>> {
    let n = points.len();
    let nbrs = |i: usize| -> Vec<usize> { (0..n).filter(|&j| (points[i] - points[j]).norm() <= eps).collect() };
    let mut labels = vec![None; n];
    let mut next = 0;
    for seed in 0..n {
        if labels[seed].is_some() || nbrs(seed).len() < min_pts {
            continue;
        }
        let c = next;
        next += 1;
        labels[seed] = Some(c);
        let mut stack = vec![seed];
        while let Some(p) = stack.pop() {
            let np = nbrs(p);
            if np.len() < min_pts {
                continue;
            }
            for q in np {
                if labels[q].is_none() {
                    labels[q] = Some(c);
                    stack.push(q);
                }
            }
        }
    }
    labels
}

/// Partition of indices induced by labels, noise as singletons, with cluster
/// ids forgotten.
pub fn label_partition(labels: &[Option<usize>]) -> BTreeSet<BTreeSet<usize>> {
    let mut groups: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    let mut out = BTreeSet::new();
    for (i, l) in labels.iter().enumerate() {
        match l {
            Some(c) => {
                groups.entry(*c).or_default().insert(i);
            }
            None => {
                out.insert(BTreeSet::from([usize::MAX - i]));
            }
        }
    }
    out.extend(groups.into_values());
    out
}

/// Check a farthest-point-sampling pick sequence by rescanning all points
/// at every step. Returns the first violating step.
pub fn check_fps(points: &[Point2<f64>], k: usize, picks: &[usize]) -> Result<(), String> {
    let n = points.len();
    if picks.len() != k.min(n) {
        return Err(format!("{} picks for k={k}, n={n}", picks.len()));
    }
    if n == 0 {
        return Ok(());
    }
    let c = points.iter().fold(nalgebra::Vector2::zeros(), |a, p| a + p.coords) / n as f64;
    for (step, &pick) in picks.iter().enumerate() {
        let score = |i: usize| -> f64 {
            if step == 0 {
                (points[i].coords - c).norm_squared()
            } else {
                picks[..step]
                    .iter()
                    .map(|&s| (points[i] - points[s]).norm_squared())
                    .fold(f64::INFINITY, f64::min)
            }
        };
        let candidates: Vec<usize> = (0..n).filter(|i| !picks[..step].contains(i)).collect();
        let best = candidates.iter().map(|&i| score(i)).fold(f64::NEG_INFINITY, f64::max);
        let expect = *candidates.iter().find(|&&i| score(i) == best).expect("non-empty");
        if pick != expect {
            return Err(format!("step {step}: picked {pick} (score {}), scan says {expect} ({best})", score(pick)));
        }
    }
    Ok(())
}

/// Eigenpairs of a symmetric 2×2 matrix from a general solver, largest first.
pub fn eigen_reference(a: f64, b: f64, c: f64) -> ((f64, f64), nalgebra::Vector2<f64>) {
    let e = Matrix2::new(a, b, b, c).symmetric_eigen();
    let (i, j) = if e.eigenvalues[0] >= e.eigenvalues[1] { (0, 1) } else { (1, 0) };
    ((e.eigenvalues[i], e.eigenvalues[j]), e.eigenvectors.column(i).into_owned())
}

pub fn segment_distance(p: Point2<f64>, a: Point2<f64>, b: Point2<f64>) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

/// Largest distance from any dropped vertex of a closed polyline to the
/// kept edge spanning it, scanning every vertex.
pub fn max_simplification_error(points: &[Point2<f64>], kept: &[usize]) -> f64 {
    let n = points.len();
    if kept.len() < 2 {
        return 0.0;
    }
    let mut worst: f64 = 0.0;
    for (w, &a) in kept.iter().enumerate() {
        let b = kept[(w + 1) % kept.len()];
        let span = if b > a { b - a } else { b + n - a };
        for s in 1..span {
            let k = (a + s) % n;
            worst = worst.max(segment_distance(points[k], points[a], points[b]));
        }
    }
    worst
}

/// Random closed polyline: a jittered star-shaped loop.
pub fn random_loop(rng: &mut impl Rng) -> Vec<Point2<f64>> {
    let n = rng.random_range(3..120);
    let (cx, cy) = (rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0));
    let mut angles: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
    angles.sort_by(f64::total_cmp);
    angles
        .into_iter()
        .map(|t| {
            let r = rng.random_range(5.0..40.0);
            Point2::new(cx + r * t.cos(), cy - r * t.sin())
        })
        .collect()
}

/// Connected components of the "within radius" graph by exhaustive pair scan.
pub fn single_linkage(points: &[nalgebra::Vector3<f64>], radius: f64) -> BTreeSet<BTreeSet<usize>> {
    let n = points.len();
    let mut comp: Vec<usize> = (0..n).collect();
    fn root(c: &mut [usize], mut i: usize) -> usize {
        while c[i] != i {
            i = c[i];
        }
        i
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if (points[i] - points[j]).norm() <= radius {
                let (ri, rj) = (root(&mut comp, i), root(&mut comp, j));
                comp[ri.max(rj)] = ri.min(rj);
            }
        }
    }
    let mut groups: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    for i in 0..n {
        let r = root(&mut comp, i);
        groups.entry(r).or_default().insert(i);
    }
    groups.into_values().collect()
}

/// Jittered clusters of detections across views; `x` of each detection is
/// its position in the returned list so support can be mapped back.
pub fn jittered(rng: &mut impl Rng) -> Vec<LiftedPoint> {
    let centers: Vec<Vec3> = (0..rng.random_range(1..12))
        .map(|_| Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    let n = rng.random_range(1..60);
    (0..n)
        .map(|i| {
            let c = centers[rng.random_range(0..centers.len())];
            let j = Vec3::new(rng.random_range(-0.03..0.03), rng.random_range(-0.03..0.03), rng.random_range(-0.03..0.03));
            LiftedPoint {
                keypoint: Keypoint2D::new(i as f64, 0.0, KeypointSource::PolygonCorner, rng.random_range(0..8)),
                world: c + j,
            }
        })
        .collect()
}
