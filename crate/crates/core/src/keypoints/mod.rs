//! Raw per-view keypoints: centroid, polygon and curvature corners, and the
//! boundary hits of the principal axes.

pub mod contour;
pub mod curvature;
pub mod pca;
pub mod simplify;

use nalgebra::{Point2, Vector2};
use serde::{Deserialize, Serialize};

pub use contour::{trace_contour, Contour};
pub use curvature::{curvature_corners, turning_angle, ContourTooShort};
pub use pca::{centroid, pca_axes, PcaAxes};
pub use simplify::{simplify_polygon, simplify_polygon_default};

use crate::mask::{BinaryMask, MaskError};

/// Where a keypoint came from. The declaration order is the deduplication
/// priority.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeypointSource {
    Centroid,
    PolygonCorner,
    CurvatureCorner,
    PcaBoundary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Keypoint2D {
    pub pos: Point2<f64>,
    pub source: KeypointSource,
    pub view_id: usize,
}

impl Keypoint2D {
    pub fn new(x: f64, y: f64, source: KeypointSource, view_id: usize) -> Self {
        Self {
            pos: Point2::new(x, y),
            source,
            view_id,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KeypointParams {
    /// Douglas–Peucker tolerance as a fraction of the contour perimeter.
    pub polygon_eps_frac: f64,
    pub curvature_window: usize,
    pub curvature_angle_deg: f64,
    pub dedup_radius: f64,
}

impl Default for KeypointParams {
    fn default() -> Self {
        Self {
            polygon_eps_frac: simplify::DEFAULT_EPS_FRAC,
            curvature_window: curvature::DEFAULT_WINDOW,
            curvature_angle_deg: curvature::DEFAULT_ANGLE_DEG,
            dedup_radius: 1.0,
        }
    }
}

/// March from `center` along `±major` and `±minor`, returning for each ray
/// the last foreground pixel before the ray first leaves the foreground.
///
/// Rays are sampled every half pixel and snapped to the nearest pixel. A ray
/// whose starting pixel is background yields `center` itself.
pub fn axis_boundary_points(
    mask: &BinaryMask,
    axes: &PcaAxes,
    center: Point2<f64>,
    view_id: usize,
) -> Vec<Keypoint2D> {
    [axes.major, -axes.major, axes.minor, -axes.minor]
        .into_iter()
        .map(|dir| {
            let pos = march(mask, center, dir).unwrap_or(center);
            Keypoint2D {
                pos,
                source: KeypointSource::PcaBoundary,
                view_id,
            }
        })
        .collect()
}

fn march(mask: &BinaryMask, center: Point2<f64>, dir: Vector2<f64>) -> Option<Point2<f64>> {
    let max_steps = 2 * (mask.width() + mask.height()) + 4;
    let mut last = None;
    for step in 0..=max_steps {
        let p = center + dir * (0.5 * step as f64);
        let (px, py) = (p.x.round() as i64, p.y.round() as i64);
        if !mask.get_signed(px, py) {
            break;
        }
        last = Some(Point2::new(px as f64, py as f64));
    }
    last
}

/// Raw keypoint set of one cleaned single-component view mask.
///
/// Polygon vertices count as corners only where the raw contour also turns
/// by more than the curvature threshold, so smooth outlines contribute no
/// polygon corners. Points within `dedup_radius` of an earlier point are
/// dropped, in the order centroid, polygon, curvature, axis boundary.
pub fn extract_raw_keypoints(
    mask: &BinaryMask,
    view_id: usize,
    params: &KeypointParams,
) -> Result<Vec<Keypoint2D>, MaskError> {
    let center = centroid(mask)?;
    let contour = trace_contour(mask)?;
    let n = contour.len();

    let mut candidates = vec![Keypoint2D {
        pos: center,
        source: KeypointSource::Centroid,
        view_id,
    }];

    let eps = (params.polygon_eps_frac * contour.perimeter()).max(f64::MIN_POSITIVE);
    let confirm_window = params.curvature_window.min(n.saturating_sub(1) / 2).max(1);
    for i in simplify_polygon(&contour, eps) {
        if n < 3 || turning_angle(&contour, i, confirm_window) > params.curvature_angle_deg {
            candidates.push(Keypoint2D {
                pos: contour.points[i],
                source: KeypointSource::PolygonCorner,
                view_id,
            });
        }
    }

    if let Ok(corners) =
        curvature_corners(&contour, params.curvature_window, params.curvature_angle_deg)
    {
        candidates.extend(corners.into_iter().map(|i| Keypoint2D {
            pos: contour.points[i],
            source: KeypointSource::CurvatureCorner,
            view_id,
        }));
    }

    let axes = pca_axes(mask)?;
    candidates.extend(axis_boundary_points(mask, &axes, center, view_id));

    Ok(dedup(candidates, params.dedup_radius))
}

fn dedup(candidates: Vec<Keypoint2D>, radius: f64) -> Vec<Keypoint2D> {
    let mut out: Vec<Keypoint2D> = Vec::with_capacity(candidates.len());
    for c in candidates {
        if out.iter().all(|k| (k.pos - c.pos).norm() > radius) {
            out.push(c);
        }
    }
    out
}
