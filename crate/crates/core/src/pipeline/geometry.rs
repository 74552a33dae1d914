//! Per-object geometry stage: clean masks, extract and filter 2D keypoints,
//! lift them and merge across views.

use serde::{Deserialize, Serialize};

use crate::filtering::{filter_keypoints, FilterParams};
use crate::keypoints::{extract_raw_keypoints, Keypoint2D, KeypointParams};
use crate::lifting::{
    bbox_diagonal, lift_keypoint, merge_cross_view, merge_with_pinned, Keypoint3D, LiftedPoint, OrthoCamera,
    DEFAULT_MERGE_RADIUS_FRAC,
};
use crate::mask::{extract_foreground, BinaryMask, MaskError, DEFAULT_MIN_AREA_FRAC};
use crate::view::{DepthMap, ViewSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryConfig {
    pub min_area_frac: f64,
    pub keypoints: KeypointParams,
    pub filter: FilterParams,
    /// Absolute merge radius in world units; overrides `merge_radius_frac`.
    pub merge_radius: Option<f64>,
    /// Merge radius as a fraction of the lifted points' bounding-box diagonal.
    pub merge_radius_frac: f64,
    pub deviation_thresh_deg: f64,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            min_area_frac: DEFAULT_MIN_AREA_FRAC,
            keypoints: KeypointParams::default(),
            filter: FilterParams::default(),
            merge_radius: None,
            merge_radius_frac: DEFAULT_MERGE_RADIUS_FRAC,
            deviation_thresh_deg: crate::lifting::frame::DEFAULT_DEVIATION_DEG,
        }
    }
}

impl GeometryConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.min_area_frac >= 0.0 && self.min_area_frac < 1.0) {
            return Err("min_area_frac must lie in [0, 1)".into());
        }
        if !(self.merge_radius_frac > 0.0) || self.merge_radius.is_some_and(|r| !(r > 0.0)) {
            return Err("merge radius must be > 0".into());
        }
        if !(self.deviation_thresh_deg > 0.0) {
            return Err("deviation_thresh_deg must be > 0".into());
        }
        self.filter.validate()
    }

    pub fn merge_radius_for(&self, lifted: &[LiftedPoint]) -> f64 {
        self.merge_radius
            .unwrap_or_else(|| (self.merge_radius_frac * bbox_diagonal(lifted.iter().map(|l| l.world))).max(1e-9))
    }
}

/// Filtered 2D keypoints of one mask in one view.
pub fn keypoints_for_mask(mask: &BinaryMask, view_id: usize, cfg: &GeometryConfig) -> Result<Vec<Keypoint2D>, MaskError> {
    let fg = extract_foreground(mask, cfg.min_area_frac)?;
    let raw = extract_raw_keypoints(&fg, view_id, &cfg.keypoints)?;
    Ok(filter_keypoints(&raw, &cfg.filter.for_mask(&fg)))
}

/// Lift keypoints that have depth under them; returns the lifted points and
/// the number dropped for lack of depth.
pub fn lift_all(kps: &[Keypoint2D], depth: &DepthMap, cam: &OrthoCamera) -> (Vec<LiftedPoint>, usize) {
    let mut out = Vec::with_capacity(kps.len());
    let mut dropped = 0;
    for k in kps {
        match lift_keypoint(k, depth, cam) {
            Ok(world) => out.push(LiftedPoint {
                keypoint: k.clone(),
                world,
            }),
            Err(_) => dropped += 1,
        }
    }
    (out, dropped)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryOutput {
    pub per_view: Vec<Vec<Keypoint2D>>,
    pub keypoints: Vec<Keypoint3D>,
    pub merge_radius: f64,
    pub dropped_no_depth: usize,
}

/// Run the geometry stage over all views of an object.
pub fn extract_object_keypoints(set: &ViewSet, cfg: &GeometryConfig) -> Result<GeometryOutput, MaskError> {
    let mut per_view = Vec::with_capacity(set.views.len());
    let mut lifted = Vec::new();
    let mut dropped = 0;
    for v in &set.views {
        let kps = keypoints_for_mask(&v.mask, v.meta.view_id, cfg)?;
        let (l, d) = lift_all(&kps, &v.depth, &v.meta.camera);
        lifted.extend(l);
        dropped += d;
        per_view.push(kps);
    }
    let merge_radius = cfg.merge_radius_for(&lifted);
    Ok(GeometryOutput {
        per_view,
        keypoints: merge_cross_view(&lifted, merge_radius),
        merge_radius,
        dropped_no_depth: dropped,
    })
}

/// Keypoints of additional segment masks merged into `existing` without
/// disturbing existing indices. Segments too small to analyse are skipped.
pub fn merge_segment_keypoints(
    existing: &[Keypoint3D],
    segments: &[(usize, BinaryMask)],
    set: &ViewSet,
    cfg: &GeometryConfig,
    merge_radius: f64,
) -> Vec<Keypoint3D> {
    let mut lifted = Vec::new();
    for (view_id, mask) in segments {
        let Some(v) = set.view(*view_id) else { continue };
        let Ok(kps) = keypoints_for_mask(mask, *view_id, cfg) else {
            continue;
        };
        lifted.extend(lift_all(&kps, &v.depth, &v.meta.camera).0);
    }
    merge_with_pinned(existing, &lifted, merge_radius)
}
