//! 2D → 3D lifting, cross-view keypoint merging, principal-frame calibration
//! and indexed overlays.

pub mod camera;
mod font;
pub mod frame;
pub mod overlay;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use camera::{OrthoCamera, Vec3};
pub use frame::{calibrate_principal_frame, Calibration, CalibrationStatus, PrincipalFrame};
pub use overlay::{render_overlay, AXIS_COLORS};

use crate::keypoints::{Keypoint2D, KeypointSource};
use crate::view::DepthMap;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LiftError {
    #[error("no depth under keypoint at ({x:.2}, {y:.2}) in view {view_id}")]
    NoDepth { x: f64, y: f64, view_id: usize },
}

/// Default merge radius as a fraction of the object bounding-box diagonal.
pub const DEFAULT_MERGE_RADIUS_FRAC: f64 = 0.02;

/// Back-project a keypoint through an orthographic camera using the
/// bilinearly sampled depth under it.
pub fn lift_keypoint(p: &Keypoint2D, depth: &DepthMap, cam: &OrthoCamera) -> Result<Vec3, LiftError> {
    let d = depth.sample(p.pos.x, p.pos.y).ok_or(LiftError::NoDepth {
        x: p.pos.x,
        y: p.pos.y,
        view_id: p.view_id,
    })?;
    Ok(cam.unproject(p.pos.x, p.pos.y, d))
}

pub fn project_to_view(w: &Vec3, cam: &OrthoCamera) -> (f64, f64) {
    cam.project(w)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LiftedPoint {
    pub keypoint: Keypoint2D,
    pub world: Vec3,
}

impl LiftedPoint {
    pub fn view_id(&self) -> usize {
        self.keypoint.view_id
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Keypoint3D {
    pub index: u32,
    pub pos: Vec3,
    pub source: KeypointSource,
    /// Detections that were merged into this point.
    pub support: Vec<Keypoint2D>,
}

impl Keypoint3D {
    pub fn views(&self) -> impl Iterator<Item = usize> + '_ {
        self.support.iter().map(|k| k.view_id)
    }
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn new(n: usize) -> Self {
        Self((0..n).collect())
    }

    fn find(&mut self, mut a: usize) -> usize {
        while self.0[a] != a {
            self.0[a] = self.0[self.0[a]];
            a = self.0[a];
        }
        a
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Pairs `(i, j)` with `i < j` whose world points lie within `radius`, found
/// with a sweep along x.
fn close_pairs(points: &[Vec3], radius: f64) -> Vec<(usize, usize)> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| points[a].x.total_cmp(&points[b].x).then(a.cmp(&b)));
    let r2 = radius * radius;
    let mut pairs = Vec::new();
    for (oi, &i) in order.iter().enumerate() {
        for &j in &order[oi + 1..] {
            if points[j].x - points[i].x > radius {
                break;
            }
            if (points[j] - points[i]).norm_squared() <= r2 {
                pairs.push((i.min(j), i.max(j)));
            }
        }
    }
    pairs
}

fn dominant_source(support: &[Keypoint2D]) -> KeypointSource {
    let mut counts = [0usize; 4];
    for k in support {
        counts[k.source as usize] += 1;
    }
    let best = counts.iter().copied().max().unwrap_or(0);
    [
        KeypointSource::Centroid,
        KeypointSource::PolygonCorner,
        KeypointSource::CurvatureCorner,
        KeypointSource::PcaBoundary,
    ]
    .into_iter()
    .find(|s| counts[*s as usize] == best)
    .expect("at least one source")
}

fn centroid_of(points: impl Iterator<Item = Vec3>) -> Vec3 {
    let (sum, n) = points.fold((Vec3::zeros(), 0usize), |(s, n), p| (s + p, n + 1));
    sum / n.max(1) as f64
}

/// Single-linkage merge of lifted detections from all views.
///
/// Detections closer than `merge_radius` (transitively) become one
/// [`Keypoint3D`] positioned at the centroid of its support. Indices run
/// `1..=N`, ordered by each cluster's first member, where members are ranked
/// by `(view_id, position in `lifted`)`.
pub fn merge_cross_view(lifted: &[LiftedPoint], merge_radius: f64) -> Vec<Keypoint3D> {
    merge_with_pinned(&[], lifted, merge_radius)
}

/// Merge new detections into an existing, index-stable keypoint set.
///
/// Pinned keypoints keep their index and position; new detections linked to
/// one (directly or through other new detections) are added to the support
/// of the lowest-index pinned keypoint in their cluster. Remaining clusters
/// receive fresh indices above the current maximum.
pub fn merge_with_pinned(pinned: &[Keypoint3D], lifted: &[LiftedPoint], merge_radius: f64) -> Vec<Keypoint3D> {
    let np = pinned.len();
    let positions: Vec<Vec3> = pinned
        .iter()
        .map(|k| k.pos)
        .chain(lifted.iter().map(|l| l.world))
        .collect();
    let mut uf = UnionFind::new(positions.len());
    for (i, j) in close_pairs(&positions, merge_radius) {
        if j >= np {
            uf.union(i, j);
        }
    }

    // rank of a new detection: (view_id, detection order)
    let rank = |j: usize| (lifted[j].view_id(), j);
    let mut new_members: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    let mut pinned_of_root: std::collections::HashMap<usize, usize> = Default::default();
    for i in 0..np {
        let r = uf.find(i);
        let entry = pinned_of_root.entry(r).or_insert(i);
        if pinned[i].index < pinned[*entry].index {
            *entry = i;
        }
    }
    for j in 0..lifted.len() {
        new_members.entry(uf.find(np + j)).or_default().push(j);
    }

    let mut out: Vec<Keypoint3D> = pinned.to_vec();
    let mut fresh: Vec<Vec<usize>> = Vec::new();
    for (root, mut members) in new_members {
        members.sort_by_key(|&j| rank(j));
        match pinned_of_root.get(&root) {
            Some(&p) => out[p]
                .support
                .extend(members.iter().map(|&j| lifted[j].keypoint.clone())),
            None => fresh.push(members),
        }
    }
    fresh.sort_by_key(|m| rank(m[0]));

    let mut next = pinned.iter().map(|k| k.index).max().unwrap_or(0) + 1;
    for members in fresh {
        let support: Vec<Keypoint2D> = members.iter().map(|&j| lifted[j].keypoint.clone()).collect();
        out.push(Keypoint3D {
            index: next,
            pos: centroid_of(members.iter().map(|&j| lifted[j].world)),
            source: dominant_source(&support),
            support,
        });
        next += 1;
    }
    for k in &mut out[..np] {
        k.source = dominant_source(&k.support);
    }
    out
}

/// Bounding-box diagonal of a point set (0 for fewer than two points).
pub fn bbox_diagonal(points: impl IntoIterator<Item = Vec3>) -> f64 {
    let mut lo = Vec3::repeat(f64::INFINITY);
    let mut hi = Vec3::repeat(f64::NEG_INFINITY);
    let mut any = false;
    for p in points {
        lo = lo.inf(&p);
        hi = hi.sup(&p);
        any = true;
    }
    if any {
        (hi - lo).norm()
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn lp(view: usize, x: f64, y: f64, z: f64) -> LiftedPoint {
        LiftedPoint {
            keypoint: Keypoint2D::new(0.0, 0.0, KeypointSource::PolygonCorner, view),
            world: Vec3::new(x, y, z),
        }
    }

    #[test]
    fn center_ray_lifts_along_forward() {
        let cam = OrthoCamera::orbit(Vec3::zeros(), 90.0, 45.0, 3.0, 0.01, (64.0, 64.0));
        let depth = DepthMap::from_fn(128, 128, |_, _| Some(2.5));
        let k = Keypoint2D::new(64.0, 64.0, KeypointSource::Centroid, 5);
        let w = lift_keypoint(&k, &depth, &cam).unwrap();
        assert_abs_diff_eq!((w - (cam.origin + cam.forward * 2.5)).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn direct_substitution() {
        // the lift formula on an explicitly specified axis-aligned camera
        let cam = OrthoCamera {
            right: Vec3::x(),
            up: Vec3::z(),
            forward: Vec3::y(),
            origin: Vec3::zeros(),
            scale: 0.01,
            principal: (50.0, 50.0),
        };
        let depth = DepthMap::from_fn(100, 100, |_, _| Some(2.0));
        let k = Keypoint2D::new(60.0, 50.0, KeypointSource::Centroid, 0);
        let w = lift_keypoint(&k, &depth, &cam).unwrap();
        assert_abs_diff_eq!((w - Vec3::new(0.1, 2.0, 0.0)).norm(), 0.0, epsilon = 1e-12);
        let (px, py) = project_to_view(&w, &cam);
        assert_abs_diff_eq!(px, 60.0, epsilon = 1e-9);
        assert_abs_diff_eq!(py, 50.0, epsilon = 1e-9);
    }

    #[test]
    fn hole_is_no_depth() {
        let cam = OrthoCamera::orbit(Vec3::zeros(), 0.0, 0.0, 3.0, 0.01, (4.0, 4.0));
        let depth = DepthMap::from_fn(8, 8, |x, _| (x < 4).then_some(1.0));
        let k = Keypoint2D::new(6.0, 2.0, KeypointSource::PcaBoundary, 1);
        assert!(matches!(lift_keypoint(&k, &depth, &cam), Err(LiftError::NoDepth { view_id: 1, .. })));
    }

    #[test]
    fn sub_radius_pair_merges() {
        let kps = merge_cross_view(&[lp(0, 0.0, 0.0, 0.0), lp(3, 0.001, 0.0, 0.0)], 0.02);
        assert_eq!(kps.len(), 1);
        assert_eq!(kps[0].support.len(), 2);
        assert_eq!(kps[0].index, 1);
        assert_abs_diff_eq!(kps[0].pos.x, 0.0005, epsilon = 1e-12);
    }

    #[test]
    fn far_pair_stays_apart() {
        let kps = merge_cross_view(&[lp(0, 0.0, 0.0, 0.0), lp(1, 1.0, 0.0, 0.0)], 0.02);
        assert_eq!(kps.len(), 2);
    }

    #[test]
    fn indices_follow_view_then_detection_order() {
        let lifted = [
            lp(2, 5.0, 0.0, 0.0),
            lp(0, 1.0, 0.0, 0.0),
            lp(1, 5.0, 0.01, 0.0),
            lp(0, 9.0, 0.0, 0.0),
        ];
        let kps = merge_cross_view(&lifted, 0.02);
        let by_index: Vec<(u32, f64)> = kps.iter().map(|k| (k.index, k.pos.x)).collect();
        assert_eq!(by_index, vec![(1, 1.0), (2, 9.0), (3, 5.0)]);
        assert_eq!(kps[2].support[0].view_id, 1);
    }

    #[test]
    fn pinned_points_keep_indices() {
        let base = merge_cross_view(&[lp(0, 0.0, 0.0, 0.0), lp(0, 1.0, 0.0, 0.0)], 0.02);
        let merged = merge_with_pinned(&base, &[lp(4, 0.01, 0.0, 0.0), lp(4, 2.0, 0.0, 0.0)], 0.02);
        assert_eq!(merged.len(), 3);
        assert_eq!(merged[0].index, 1);
        assert_eq!(merged[0].pos, Vec3::zeros());
        assert_eq!(merged[0].support.len(), 2);
        assert_eq!(merged[2].index, 3);
        assert_eq!(merged[2].pos.x, 2.0);
    }
}
