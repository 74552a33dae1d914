//! The eight-view render bundle and its on-disk layout.
//!
//! ```text
//! <object_id>/view_<k>/mask.png    8-bit gray, >= 128 is foreground
//! <object_id>/view_<k>/depth.pgm   16-bit, 0 = no depth, 1..=65535 linear over [depth_min, depth_max]
//! <object_id>/view_<k>/rgb.png     optional
//! <object_id>/view_<k>/meta.json
//! ```
//!
//! Optional `view_top/` and `view_bottom/` directories with the same files
//! feed principal-axis calibration.

use std::fs;
use std::path::{Path, PathBuf};

use image::{GrayImage, ImageBuffer, Luma, RgbImage};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lifting::camera::{OrthoCamera, Vec3};
use crate::mask::BinaryMask;

pub const VIEW_COUNT: usize = 8;
pub const OBLIQUE_ELEVATION_DEG: f64 = 45.0;

#[derive(Debug, Error)]
pub enum ViewError {
    #[error("view {view_id} missing under {dir}")]
    MissingView { dir: PathBuf, view_id: usize },
    #[error("{what} is {got_w}x{got_h}, expected {want_w}x{want_h}")]
    DimensionMismatch {
        what: String,
        want_w: usize,
        want_h: usize,
        got_w: usize,
        got_h: usize,
    },
    #[error("corrupt file {path}: {reason}")]
    CorruptFile { path: PathBuf, reason: String },
    #[error("pose set is not the canonical 4 horizontal + 4 oblique views: {0}")]
    BadPoseSet(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl ViewError {
    fn corrupt(path: &Path, reason: impl ToString) -> Self {
        Self::CorruptFile {
            path: path.to_path_buf(),
            reason: reason.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoseKind {
    Horizontal,
    Oblique,
    Top,
    Bottom,
}

/// Canonical pose for view `k`: 0..4 horizontal at azimuth 90°·k, 4..8 oblique
/// (45° elevation) at azimuth 90°·(k-4).
pub fn canonical_pose(view_id: usize) -> (PoseKind, f64, f64) {
    assert!(view_id < VIEW_COUNT, "view id {view_id} out of range");
    if view_id < 4 {
        (PoseKind::Horizontal, 90.0 * view_id as f64, 0.0)
    } else {
        (
            PoseKind::Oblique,
            90.0 * (view_id - 4) as f64,
            OBLIQUE_ELEVATION_DEG,
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViewMeta {
    pub view_id: usize,
    pub pose_kind: PoseKind,
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
    pub camera: OrthoCamera,
}

/// `meta.json` contents.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetaFile {
    pub pose_kind: PoseKind,
    pub azimuth: f64,
    pub elevation: f64,
    /// World units per pixel.
    pub scale: f64,
    pub depth_min: f64,
    pub depth_max: f64,
    /// Camera origin (the world point at the principal pixel with zero depth).
    #[serde(default)]
    pub origin: Option<[f64; 3]>,
    /// Principal pixel; defaults to the image centre `(w/2, h/2)`.
    #[serde(default)]
    pub principal: Option<[f64; 2]>,
}

impl MetaFile {
    pub fn camera(&self, width: usize, height: usize) -> OrthoCamera {
        let principal = self
            .principal
            .map_or((width as f64 / 2.0, height as f64 / 2.0), |[x, y]| (x, y));
        let mut cam = OrthoCamera::orbit(
            Vec3::zeros(),
            self.azimuth,
            self.elevation,
            0.0,
            self.scale,
            principal,
        );
        if let Some([x, y, z]) = self.origin {
            cam.origin = Vec3::new(x, y, z);
        }
        cam
    }
}

/// Per-pixel depth along the camera's forward axis; NaN marks holes.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl DepthMap {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), width * height, "depth value count");
        Self {
            width,
            height,
            values,
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> Option<f64>) -> Self {
        let mut values = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                values.push(f(x, y).unwrap_or(f64::NAN));
            }
        }
        Self::new(width, height, values)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, x: usize, y: usize) -> Option<f64> {
        let v = self.values[y * self.width + x];
        (!v.is_nan()).then_some(v)
    }

    /// Bilinear sample at a sub-pixel position. Every neighbour that carries
    /// non-zero weight must hold a valid depth.
    pub fn sample(&self, x: f64, y: f64) -> Option<f64> {
        if !(x >= 0.0 && y >= 0.0 && x <= (self.width - 1) as f64 && y <= (self.height - 1) as f64)
        {
            return None;
        }
        let (x0, y0) = (x.floor() as usize, y.floor() as usize);
        let (fx, fy) = (x - x0 as f64, y - y0 as f64);
        let mut acc = 0.0;
        for (dx, wx) in [(0, 1.0 - fx), (1, fx)] {
            for (dy, wy) in [(0, 1.0 - fy), (1, fy)] {
                let w = wx * wy;
                if w == 0.0 {
                    continue;
                }
                acc += w * self.get(x0 + dx, y0 + dy)?;
            }
        }
        Some(acc)
    }

    /// Valid (min, max) range, or `None` when every pixel is a hole.
    pub fn range(&self) -> Option<(f64, f64)> {
        self.values
            .iter()
            .filter(|v| !v.is_nan())
            .fold(None, |acc, &v| match acc {
                None => Some((v, v)),
                Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
            })
    }
}

#[derive(Debug, Clone)]
pub struct View {
    pub meta: ViewMeta,
    pub mask: BinaryMask,
    pub depth: DepthMap,
    pub rgb: Option<RgbImage>,
}

/// Calibration input: a mask seen straight down (top) or straight up (bottom).
#[derive(Debug, Clone)]
pub struct AxialView {
    pub mask: BinaryMask,
    pub depth: DepthMap,
    pub camera: OrthoCamera,
}

#[derive(Debug, Clone)]
pub struct ViewSet {
    pub object_id: String,
    pub views: Vec<View>,
    pub top: Option<AxialView>,
    pub bottom: Option<AxialView>,
}

impl ViewSet {
    pub fn dimensions(&self) -> (usize, usize) {
        self.views
            .first()
            .map_or((0, 0), |v| (v.mask.width(), v.mask.height()))
    }

    pub fn view(&self, view_id: usize) -> Option<&View> {
        self.views.iter().find(|v| v.meta.view_id == view_id)
    }

    /// Check the pose-coverage and shared-dimension invariants.
    pub fn validate(&self) -> Result<(), ViewError> {
        if self.views.len() != VIEW_COUNT {
            return Err(ViewError::BadPoseSet(format!("{} views", self.views.len())));
        }
        let mut seen = [false; VIEW_COUNT];
        for v in &self.views {
            let (kind, az, el) = canonical_pose(v.meta.view_id);
            let m = &v.meta;
            if seen[m.view_id]
                || m.pose_kind != kind
                || (m.azimuth_deg - az).abs() > 1e-6
                || (m.elevation_deg - el).abs() > 1e-6
            {
                return Err(ViewError::BadPoseSet(format!(
                    "view {} has pose {:?} az {} el {}",
                    m.view_id, m.pose_kind, m.azimuth_deg, m.elevation_deg
                )));
            }
            seen[m.view_id] = true;
        }
        let (w, h) = self.dimensions();
        for v in &self.views {
            check_dims(&format!("view {} mask", v.meta.view_id), w, h, v.mask.width(), v.mask.height())?;
            check_dims(&format!("view {} depth", v.meta.view_id), w, h, v.depth.width(), v.depth.height())?;
            if let Some(rgb) = &v.rgb {
                check_dims(
                    &format!("view {} rgb", v.meta.view_id),
                    w,
                    h,
                    rgb.width() as usize,
                    rgb.height() as usize,
                )?;
            }
        }
        Ok(())
    }
}

fn check_dims(what: &str, want_w: usize, want_h: usize, got_w: usize, got_h: usize) -> Result<(), ViewError> {
    if (want_w, want_h) != (got_w, got_h) {
        return Err(ViewError::DimensionMismatch {
            what: what.to_string(),
            want_w,
            want_h,
            got_w,
            got_h,
        });
    }
    Ok(())
}

pub fn view_dir(object_dir: &Path, view_id: usize) -> PathBuf {
    object_dir.join(format!("view_{view_id}"))
}

/// Load `<dir>/view_0 .. view_7` (plus optional top/bottom views).
pub fn load_view_set(dir: &Path) -> Result<ViewSet, ViewError> {
    let object_id = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut views = Vec::with_capacity(VIEW_COUNT);
    for view_id in 0..VIEW_COUNT {
        let vdir = view_dir(dir, view_id);
        if !vdir.join("mask.png").is_file() || !vdir.join("meta.json").is_file() || !vdir.join("depth.pgm").is_file() {
            return Err(ViewError::MissingView {
                dir: dir.to_path_buf(),
                view_id,
            });
        }
        let (meta, mask, depth, rgb) = load_view_files(&vdir)?;
        let camera = meta.camera(mask.width(), mask.height());
        views.push(View {
            meta: ViewMeta {
                view_id,
                pose_kind: meta.pose_kind,
                azimuth_deg: meta.azimuth,
                elevation_deg: meta.elevation,
                camera,
            },
            mask,
            depth,
            rgb,
        });
    }
    let axial = |name: &str| -> Result<Option<AxialView>, ViewError> {
        let vdir = dir.join(name);
        if !vdir.join("mask.png").is_file() {
            return Ok(None);
        }
        let (meta, mask, depth, _) = load_view_files(&vdir)?;
        check_dims(&format!("{name} depth"), mask.width(), mask.height(), depth.width(), depth.height())?;
        let camera = meta.camera(mask.width(), mask.height());
        Ok(Some(AxialView {
            mask,
            depth,
            camera,
        }))
    };
    let set = ViewSet {
        object_id,
        views,
        top: axial("view_top")?,
        bottom: axial("view_bottom")?,
    };
    set.validate()?;
    Ok(set)
}

type ViewFiles = (MetaFile, BinaryMask, DepthMap, Option<RgbImage>);

fn load_view_files(vdir: &Path) -> Result<ViewFiles, ViewError> {
    let meta_path = vdir.join("meta.json");
    let meta: MetaFile = serde_json::from_slice(&fs::read(&meta_path)?)
        .map_err(|e| ViewError::corrupt(&meta_path, e))?;
    let mask = read_mask_png(&vdir.join("mask.png"))?;
    let depth = read_depth_pgm(&vdir.join("depth.pgm"), meta.depth_min, meta.depth_max)?;
    let rgb_path = vdir.join("rgb.png");
    let rgb = if rgb_path.is_file() {
        Some(
            image::open(&rgb_path)
                .map_err(|e| ViewError::corrupt(&rgb_path, e))?
                .to_rgb8(),
        )
    } else {
        None
    };
    Ok((meta, mask, depth, rgb))
}

pub fn mask_from_gray(img: &GrayImage) -> BinaryMask {
    let (w, h) = (img.width() as usize, img.height() as usize);
    BinaryMask::new(w, h, img.pixels().map(|p| p.0[0] >= 128).collect())
        .expect("image dimensions are consistent")
}

pub fn mask_to_gray(mask: &BinaryMask) -> GrayImage {
    GrayImage::from_fn(mask.width() as u32, mask.height() as u32, |x, y| {
        Luma([if mask.get(x as usize, y as usize) { 255 } else { 0 }])
    })
}

pub fn read_mask_png(path: &Path) -> Result<BinaryMask, ViewError> {
    let img = image::open(path).map_err(|e| ViewError::corrupt(path, e))?;
    let gray = img.to_luma8();
    if gray.width() == 0 || gray.height() == 0 {
        return Err(ViewError::corrupt(path, "zero-sized mask"));
    }
    Ok(mask_from_gray(&gray))
}

pub fn write_mask_png(path: &Path, mask: &BinaryMask) -> Result<(), ViewError> {
    mask_to_gray(mask)
        .save(path)
        .map_err(|e| ViewError::corrupt(path, e))
}

/// Decode the 16-bit depth encoding: 0 is a hole, 1..=65535 spans `[min, max]`.
pub fn decode_depth(raw: u16, min: f64, max: f64) -> Option<f64> {
    (raw != 0).then(|| min + (f64::from(raw) - 1.0) / 65534.0 * (max - min))
}

pub fn encode_depth(depth: Option<f64>, min: f64, max: f64) -> u16 {
    match depth {
        None => 0,
        Some(_) if max <= min => 1,
        Some(d) => {
            let t = ((d - min) / (max - min)).clamp(0.0, 1.0);
            (1.0 + (t * 65534.0).round()) as u16
        }
    }
}

pub fn read_depth_pgm(path: &Path, min: f64, max: f64) -> Result<DepthMap, ViewError> {
    let img = image::open(path).map_err(|e| ViewError::corrupt(path, e))?;
    let img = img.into_luma16();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let values = img
        .pixels()
        .map(|p| decode_depth(p.0[0], min, max).unwrap_or(f64::NAN))
        .collect();
    Ok(DepthMap::new(w, h, values))
}

/// Write a depth map as 16-bit PGM, returning the `(min, max)` range recorded
/// for `meta.json`.
pub fn write_depth_pgm(path: &Path, depth: &DepthMap) -> Result<(f64, f64), ViewError> {
    let (min, max) = depth.range().unwrap_or((0.0, 0.0));
    let img: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_fn(depth.width() as u32, depth.height() as u32, |x, y| {
            Luma([encode_depth(depth.get(x as usize, y as usize), min, max)])
        });
    img.save_with_format(path, image::ImageFormat::Pnm)
        .map_err(|e| ViewError::corrupt(path, e))?;
    Ok((min, max))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_poses_cover_each_combination_once() {
        let mut poses: Vec<(PoseKind, i64)> = (0..VIEW_COUNT)
            .map(|k| {
                let (kind, az, _) = canonical_pose(k);
                (kind, az as i64)
            })
            .collect();
        poses.sort_by_key(|(k, a)| (*k as u8, *a));
        poses.dedup();
        assert_eq!(poses.len(), 8);
    }

    #[test]
    fn depth_codec_round_trip() {
        for d in [2.0, 2.5, 3.999, 4.0] {
            let raw = encode_depth(Some(d), 2.0, 4.0);
            let back = decode_depth(raw, 2.0, 4.0).unwrap();
            assert!((back - d).abs() < 2.0 / 65534.0);
        }
        assert_eq!(encode_depth(None, 2.0, 4.0), 0);
        assert_eq!(decode_depth(0, 2.0, 4.0), None);
    }

    #[test]
    fn bilinear_ignores_zero_weight_neighbours() {
        let d = DepthMap::from_fn(3, 3, |x, y| (x < 2 && y < 2).then_some((x + y) as f64));
        assert_eq!(d.sample(1.0, 1.0), Some(2.0));
        assert_eq!(d.sample(0.5, 0.5), Some(1.0));
        assert_eq!(d.sample(1.5, 1.0), None);
        assert_eq!(d.sample(-0.1, 0.0), None);
    }
}
