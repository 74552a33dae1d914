//! Object-level pipeline stages and the run orchestrator.
//!
//! Each stage reads the previous stage's artifacts from the object's run
//! directory and writes its own, so a run can stop after any stage and be
//! continued later.

pub mod geometry;
pub mod run;

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use image::RgbImage;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aligner::{
    build_alignment_prompt, build_identify_prompt, parse_alignment_response, parse_identify_response, query,
    IdentifyResult, RetryPolicy, Transcript, VlmProvider, VlmRequest,
};
use crate::lifting::overlay::mask_backdrop;
use crate::lifting::{calibrate_principal_frame, render_overlay, Calibration, Keypoint3D, PrincipalFrame, Vec3};
use crate::refine::{run_self_refine, BackendError, RefineBackend, RefineConfig, RefineOutcome};
use crate::segmentation::{GranularityLevel, SegProvider, SegmentationRequest};
use crate::semantic::json::{parse_correspondences, serialize_correspondences};
use crate::semantic::{
    serialize_annotation, validate_correspondences, AnnotatedKeypoint, AnnotationRecord, CorrespondenceSet, EntryIssue,
    FrameInfo, KeyPrimitive, OriId, PosId, Vec3Field,
};
use crate::view::{ViewSet, View};
use geometry::{extract_object_keypoints, merge_segment_keypoints, GeometryConfig, GeometryOutput};

pub const GEOMETRY_FILE: &str = "geometry.json";
pub const IDENTIFY_FILE: &str = "identify.json";
pub const ALIGN_FILE: &str = "align.json";
pub const OVERLAY_DIR: &str = "overlays";

/// Every tunable of a run. Unknown keys are rejected when loading.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub geometry: GeometryConfig,
    pub refine: RefineConfig,
    pub retry: RetrySettings,
    /// Maximum concurrent aligner calls across all objects.
    pub max_concurrent_requests: usize,
    /// Objects processed in parallel; 0 means one per logical core.
    pub workers: usize,
    pub vlm: Option<crate::aligner::http::HttpProviderConfig>,
    pub seg_endpoint: Option<String>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            geometry: GeometryConfig::default(),
            refine: RefineConfig::default(),
            retry: RetrySettings::default(),
            max_concurrent_requests: crate::aligner::provider::DEFAULT_CONCURRENCY,
            workers: 0,
            vlm: None,
            seg_endpoint: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrySettings {
    pub max_retries: u32,
    pub base_delay_ms: u64,
    pub factor: f64,
}

impl Default for RetrySettings {
    fn default() -> Self {
        let p = RetryPolicy::default();
        Self {
            max_retries: p.max_retries,
            base_delay_ms: p.base_delay.as_millis() as u64,
            factor: p.factor,
        }
    }
}

impl RetrySettings {
    pub fn policy(&self) -> RetryPolicy {
        RetryPolicy {
            max_retries: self.max_retries,
            base_delay: std::time::Duration::from_millis(self.base_delay_ms),
            factor: self.factor,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), String> {
        self.geometry.validate()?;
        self.refine.validate()?;
        if self.max_concurrent_requests == 0 {
            return Err("max_concurrent_requests must be >= 1".into());
        }
        if !(self.retry.factor >= 1.0) {
            return Err("retry.factor must be >= 1".into());
        }
        Ok(())
    }
}

/// Builds a segmentation provider for an object's input directory.
pub type SegFactory = Arc<dyn Fn(&Path) -> Box<dyn SegProvider> + Send + Sync>;

#[derive(Clone)]
pub struct Providers {
    pub vlm: Arc<dyn VlmProvider>,
    pub seg: SegFactory,
}

#[derive(Debug, Error)]
pub enum StageError {
    #[error("{0}")]
    View(#[from] crate::view::ViewError),
    #[error("{0}")]
    Mask(#[from] crate::mask::MaskError),
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("identify: {0}")]
    Identify(String),
    #[error("align: {0}")]
    Align(String),
    #[error("matching failure: {0}")]
    Matching(String),
    #[error("corrupt artifact {path}: {message}")]
    Artifact { path: PathBuf, message: String },
}

impl StageError {
    /// Short machine-friendly reason recorded in the manifest.
    pub fn reason(&self) -> String {
        match self {
            StageError::Mask(e) => format!("{}: {e}", mask_error_name(e)),
            other => other.to_string(),
        }
    }
}

fn mask_error_name(e: &crate::mask::MaskError) -> &'static str {
    use crate::mask::MaskError::*;
    match e {
        EmptyMask => "EmptyMask",
        _ => "MaskError",
    }
}

/// Persisted output of the geometry stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryArtifact {
    pub geometry: GeometryOutput,
    pub frame: PrincipalFrame,
    pub calibration: Option<Calibration>,
}

impl GeometryArtifact {
    pub fn frame_info(&self) -> FrameInfo {
        FrameInfo::new(&self.frame, self.calibration.as_ref().map(|c| c.status))
    }
}

pub fn overlay_path(object_run_dir: &Path, sub: Option<&str>, view_id: usize) -> PathBuf {
    let mut d = object_run_dir.join(OVERLAY_DIR);
    if let Some(s) = sub {
        d = d.join(s);
    }
    d.join(format!("view_{view_id}.png"))
}

fn view_base(v: &View) -> RgbImage {
    v.rgb.clone().unwrap_or_else(|| mask_backdrop(&v.mask))
}

/// Overlays for every view, showing the keypoints detected in that view.
pub fn render_view_overlays(set: &ViewSet, keypoints: &[Keypoint3D], frame: &PrincipalFrame) -> Vec<RgbImage> {
    set.views
        .iter()
        .map(|v| {
            let shown: Vec<Keypoint3D> = keypoints
                .iter()
                .filter(|k| k.views().any(|id| id == v.meta.view_id))
                .cloned()
                .collect();
            render_overlay(&view_base(v), &shown, frame, &v.meta.camera)
        })
        .collect()
}

/// Overlays of a stored record over a view set; each view shows the
/// keypoints whose detections include it.
pub fn render_record_overlays(set: &ViewSet, record: &AnnotationRecord) -> Vec<RgbImage> {
    let frame = record.frame.frame();
    set.views
        .iter()
        .map(|v| {
            let shown: Vec<Keypoint3D> = record
                .keypoints
                .iter()
                .filter(|k| k.views.contains(&v.meta.view_id))
                .map(|k| Keypoint3D {
                    index: k.index,
                    pos: k.pos.into(),
                    source: k.source,
                    support: Vec::new(),
                })
                .collect();
            render_overlay(&view_base(v), &shown, &frame, &v.meta.camera)
        })
        .collect()
}

fn write_overlays(dir: &Path, sub: Option<&str>, set: &ViewSet, imgs: &[RgbImage]) -> Result<Vec<PathBuf>, StageError> {
    let mut paths = Vec::with_capacity(imgs.len());
    for (v, img) in set.views.iter().zip(imgs) {
        let p = overlay_path(dir, sub, v.meta.view_id);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent)?;
        }
        img.save(&p).map_err(io::Error::other)?;
        paths.push(p);
    }
    Ok(paths)
}

pub fn overlay_paths(dir: &Path, sub: Option<&str>, set: &ViewSet) -> Vec<PathBuf> {
    set.views.iter().map(|v| overlay_path(dir, sub, v.meta.view_id)).collect()
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, StageError> {
    let bytes = fs::read(path)?;
    serde_json::from_slice(&bytes).map_err(|e| StageError::Artifact {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), StageError> {
    fs::write(path, serde_json::to_string_pretty(value).map_err(io::Error::other)? + "\n")?;
    Ok(())
}

/// Geometry stage: keypoints, frame calibration and overlays.
pub fn stage_extract(set: &ViewSet, out: &Path, cfg: &GeometryConfig) -> Result<GeometryArtifact, StageError> {
    fs::create_dir_all(out)?;
    let geometry = extract_object_keypoints(set, cfg)?;
    let default_frame = PrincipalFrame::default();
    let calibration = match (&set.top, &set.bottom) {
        (Some(top), Some(bottom)) => Some(calibrate_principal_frame(top, bottom, &default_frame, cfg.deviation_thresh_deg)?),
        _ => None,
    };
    let frame = calibration.as_ref().map_or(default_frame, |c| c.frame.clone());
    let art = GeometryArtifact {
        geometry,
        frame,
        calibration,
    };
    write_overlays(out, None, set, &render_view_overlays(set, &art.geometry.keypoints, &art.frame))?;
    write_json(&out.join(GEOMETRY_FILE), &art)?;
    Ok(art)
}

pub fn load_geometry(out: &Path) -> Result<GeometryArtifact, StageError> {
    read_json(&out.join(GEOMETRY_FILE))
}

pub struct AlignContext<'a> {
    pub provider: &'a dyn VlmProvider,
    pub retry: RetryPolicy,
    pub transcript: Option<&'a Transcript>,
}

impl AlignContext<'_> {
    fn ask(&self, tag: String, prompt: crate::aligner::Prompt) -> Result<String, String> {
        query(self.provider, &self.retry, &VlmRequest::new(tag, prompt), self.transcript).map_err(|e| e.to_string())
    }
}

/// Identify and align stage: declared primitives and the first
/// correspondence set.
pub fn stage_align(
    object_id: &str,
    set: &ViewSet,
    out: &Path,
    ctx: &AlignContext,
) -> Result<(IdentifyResult, CorrespondenceSet), StageError> {
    let overlays = overlay_paths(out, None, set);
    let prompt = build_identify_prompt(&overlays).map_err(|e| StageError::Identify(e.to_string()))?;
    let text = ctx.ask(format!("{object_id}/identify"), prompt).map_err(StageError::Identify)?;
    let identified = parse_identify_response(&text).map_err(|e| StageError::Identify(e.to_string()))?;

    let prompt = build_alignment_prompt(&identified.primitives, &overlays).map_err(|e| StageError::Align(e.to_string()))?;
    let text = ctx.ask(format!("{object_id}/align"), prompt).map_err(StageError::Align)?;
    let corrs = parse_alignment_response(&text).map_err(|e| StageError::Align(e.to_string()))?;

    write_json(&out.join(IDENTIFY_FILE), &identified)?;
    fs::write(out.join(ALIGN_FILE), serialize_correspondences(&corrs))?;
    Ok((identified, corrs))
}

pub fn load_alignment(out: &Path) -> Result<(IdentifyResult, CorrespondenceSet), StageError> {
    let identified = read_json(&out.join(IDENTIFY_FILE))?;
    let path = out.join(ALIGN_FILE);
    let corrs = parse_correspondences(&fs::read(&path)?).map_err(|e| StageError::Artifact {
        path,
        message: e.to_string(),
    })?;
    Ok((identified, corrs))
}

/// Refinement backend that resegments every view through a segmentation
/// provider and re-queries the aligner.
pub struct PipelineBackend<'a> {
    pub object_id: &'a str,
    pub set: &'a ViewSet,
    pub out: &'a Path,
    pub seg: &'a dyn SegProvider,
    pub ctx: &'a AlignContext<'a>,
    pub geometry: &'a GeometryConfig,
    pub merge_radius: f64,
    pub frame: PrincipalFrame,
    pub keypoints: Vec<Keypoint3D>,
    overlays: Vec<PathBuf>,
}

impl<'a> PipelineBackend<'a> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        object_id: &'a str,
        set: &'a ViewSet,
        out: &'a Path,
        seg: &'a dyn SegProvider,
        ctx: &'a AlignContext<'a>,
        geometry: &'a GeometryConfig,
        art: &GeometryArtifact,
    ) -> Self {
        Self {
            object_id,
            set,
            out,
            seg,
            ctx,
            geometry,
            merge_radius: art.geometry.merge_radius,
            frame: art.frame.clone(),
            keypoints: art.geometry.keypoints.clone(),
            overlays: overlay_paths(out, None, set),
        }
    }
}

impl RefineBackend for PipelineBackend<'_> {
    fn resample(&mut self, t: u32, gamma: &GranularityLevel) -> Result<usize, BackendError> {
        let mut segments = Vec::new();
        for v in &self.set.views {
            let image = view_base(v);
            let res = self
                .seg
                .segment(&SegmentationRequest {
                    object_id: self.object_id,
                    view_id: v.meta.view_id,
                    granularity: gamma,
                    image: &image,
                })
                .map_err(|e| BackendError(format!("segmentation: {e}")))?;
            segments.extend(res.masks.into_iter().map(|m| (v.meta.view_id, m)));
        }
        self.keypoints = merge_segment_keypoints(&self.keypoints, &segments, self.set, self.geometry, self.merge_radius);
        let sub = format!("refine_{t}");
        let imgs = render_view_overlays(self.set, &self.keypoints, &self.frame);
        self.overlays =
            write_overlays(self.out, Some(&sub), self.set, &imgs).map_err(|e| BackendError(e.to_string()))?;
        Ok(self.keypoints.len())
    }

    fn align(&mut self, t: u32, _gamma: &GranularityLevel, targets: &[KeyPrimitive]) -> Result<CorrespondenceSet, BackendError> {
        let prompt = build_alignment_prompt(targets, &self.overlays).map_err(|e| BackendError(e.to_string()))?;
        let text = self
            .ctx
            .ask(format!("{}/refine/{t}", self.object_id), prompt)
            .map_err(BackendError)?;
        parse_alignment_response(&text).map_err(|e| BackendError(e.to_string()))
    }
}

fn round6(v: f64) -> f64 {
    let r = (v * 1e6).round() / 1e6;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

fn rounded(v: &Vec3) -> [f64; 3] {
    [round6(v.x), round6(v.y), round6(v.z)]
}

/// Build the final record: drop entries that reference unknown keypoints
/// and fill in `Pos`/`Orientation` from geometry.
pub fn finalize_record(
    object_id: &str,
    keypoints: &[Keypoint3D],
    frame: FrameInfo,
    corrs: &CorrespondenceSet,
    threshold: f64,
) -> AnnotationRecord {
    let indices: Vec<u32> = keypoints.iter().map(|k| k.index).collect();
    let report = validate_correspondences(corrs, &indices, threshold);
    let dangling: Vec<usize> = report.with_issue(EntryIssue::DanglingRef).collect();
    let pos_of = |i: u32| keypoints.iter().find(|k| k.index == i).map(|k| k.pos);
    let axes = frame.frame();
    let entries = corrs
        .entries()
        .iter()
        .enumerate()
        .filter(|(i, _)| !dangling.contains(i))
        .map(|(_, c)| {
            let mut c = c.clone();
            if let PosId::Index(i) = c.pos_id {
                if let Some(p) = pos_of(i) {
                    c.pos = Vec3Field::Value(rounded(&p));
                }
            }
            let dir = match c.ori_id {
                OriId::PointPair(a, b) => match (pos_of(a), pos_of(b)) {
                    (Some(pa), Some(pb)) => (pb - pa).try_normalize(1e-12),
                    _ => None,
                },
                OriId::Axis(s) => {
                    let (axis, sign) = s.axis_sign();
                    Some(axes.axes()[axis] * sign)
                }
                OriId::None | OriId::Error => None,
            };
            if let Some(d) = dir {
                c.orientation = Vec3Field::Value(rounded(&d));
            }
            c
        })
        .collect();
    let mut kps: Vec<AnnotatedKeypoint> = keypoints
        .iter()
        .map(|k| {
            let mut a = AnnotatedKeypoint::from(k);
            a.pos = rounded(&k.pos);
            a
        })
        .collect();
    kps.sort_by_key(|k| k.index);
    let mut frame = frame;
    for v in [&mut frame.origin, &mut frame.x_axis, &mut frame.y_axis, &mut frame.z_axis] {
        *v = v.map(round6);
    }
    AnnotationRecord {
        object_id: object_id.to_string(),
        frame,
        keypoints: kps,
        correspondences: CorrespondenceSet::new(entries),
    }
}

pub fn annotation_path(out: &Path, object_id: &str) -> PathBuf {
    out.join(format!("{object_id}.annotation.json"))
}

pub fn trace_path(out: &Path, object_id: &str) -> PathBuf {
    out.join(format!("{object_id}.refine-trace.jsonl"))
}

/// Refine stage: run the self-refine loop and write the trace and, on
/// success, the annotation record.
#[allow(clippy::too_many_arguments)]
pub fn stage_refine(
    object_id: &str,
    set: &ViewSet,
    out: &Path,
    art: &GeometryArtifact,
    identified: &IdentifyResult,
    corrs: CorrespondenceSet,
    seg: &dyn SegProvider,
    ctx: &AlignContext,
    geometry: &GeometryConfig,
    refine: &RefineConfig,
) -> Result<(AnnotationRecord, RefineOutcome), StageError> {
    let mut backend = PipelineBackend::new(object_id, set, out, seg, ctx, geometry, art);
    let outcome = run_self_refine(&identified.primitives, corrs, &mut backend, refine);
    outcome.write_trace(&trace_path(out, object_id))?;
    if !outcome.succeeded() {
        let cause = match &outcome.status {
            crate::refine::RefineStatus::Failure(c) => serde_json::to_string(c).unwrap_or_default(),
            crate::refine::RefineStatus::Success => unreachable!(),
        };
        return Err(StageError::Matching(cause));
    }
    let record = finalize_record(
        object_id,
        &backend.keypoints,
        art.frame_info(),
        &outcome.correspondences,
        refine.low_conf_threshold,
    );
    fs::write(annotation_path(out, object_id), serialize_annotation(&record))?;
    Ok((record, outcome))
}
