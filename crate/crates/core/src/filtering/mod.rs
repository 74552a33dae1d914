//! Two-stage keypoint filtering: density pruning followed by farthest point
//! sampling.

pub mod dbscan;
pub mod fps;

use nalgebra::Point2;
use serde::{Deserialize, Serialize};

pub use dbscan::{cluster_representatives, dbscan, Clustering};
pub use fps::farthest_point_sampling;

use crate::keypoints::{Keypoint2D, KeypointSource};
use crate::mask::BinaryMask;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterParams {
    /// Absolute clustering radius in pixels; when unset it is derived as
    /// `dbscan_eps_frac` of the mask (or keypoint) bounding-box diagonal.
    pub dbscan_eps: Option<f64>,
    pub dbscan_eps_frac: f64,
    pub dbscan_min_pts: usize,
    pub fps_k: usize,
}

impl Default for FilterParams {
    fn default() -> Self {
        Self {
            dbscan_eps: None,
            dbscan_eps_frac: 0.05,
            dbscan_min_pts: 2,
            fps_k: 12,
        }
    }
}

impl FilterParams {
    /// Fix the clustering radius from a mask's bounding box, unless one is set.
    pub fn for_mask(&self, mask: &BinaryMask) -> Self {
        let mut out = self.clone();
        if out.dbscan_eps.is_none() {
            if let Some(bbox) = mask.bbox() {
                out.dbscan_eps = Some((self.dbscan_eps_frac * bbox.diagonal()).max(1e-6));
            }
        }
        out
    }

    pub fn validate(&self) -> Result<(), String> {
        if let Some(eps) = self.dbscan_eps {
            if !(eps > 0.0) {
                return Err(format!("dbscan_eps must be > 0 (got {eps})"));
            }
        }
        if !(self.dbscan_eps_frac > 0.0) {
            return Err("dbscan_eps_frac must be > 0".into());
        }
        if self.dbscan_min_pts < 1 {
            return Err("dbscan_min_pts must be >= 1".into());
        }
        if self.fps_k < 1 {
            return Err("fps_k must be >= 1".into());
        }
        Ok(())
    }

    fn eps_for(&self, points: &[Point2<f64>]) -> f64 {
        if let Some(eps) = self.dbscan_eps {
            return eps;
        }
        let (mut lo, mut hi) = (Point2::new(f64::MAX, f64::MAX), Point2::new(f64::MIN, f64::MIN));
        for p in points {
            lo = Point2::new(lo.x.min(p.x), lo.y.min(p.y));
            hi = Point2::new(hi.x.max(p.x), hi.y.max(p.y));
        }
        ((hi - lo).norm() * self.dbscan_eps_frac).max(1e-6)
    }
}

/// Reduce a raw keypoint set: centroids always survive; the remaining points
/// are clustered, replaced by cluster medoids (noise kept), and subsampled to
/// `fps_k` points by farthest point sampling.
///
/// Output: the centroid points in input order, then the sampled points in
/// selection order.
pub fn filter_keypoints(k_raw: &[Keypoint2D], params: &FilterParams) -> Vec<Keypoint2D> {
    let (centres, rest): (Vec<&Keypoint2D>, Vec<&Keypoint2D>) = k_raw
        .iter()
        .partition(|k| k.source == KeypointSource::Centroid);
    let mut out: Vec<Keypoint2D> = centres.into_iter().cloned().collect();
    if rest.is_empty() {
        return out;
    }

    let points: Vec<Point2<f64>> = rest.iter().map(|k| k.pos).collect();
    let clustering = dbscan(&points, params.eps_for(&points), params.dbscan_min_pts);
    let reps = cluster_representatives(&points, &clustering);
    let rep_points: Vec<Point2<f64>> = reps.iter().map(|&i| points[i]).collect();
    let picks = farthest_point_sampling(&rep_points, params.fps_k);
    out.extend(picks.into_iter().map(|j| rest[reps[j]].clone()));
    out
}
