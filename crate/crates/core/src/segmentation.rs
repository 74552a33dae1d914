//! Multi-granularity segmentation providers: pre-exported mask directories,
//! procedural test shapes, and an HTTP client for a segmentation service.

use std::io::Cursor;
use std::path::{Path, PathBuf};
use std::time::Duration;

use base64::Engine;
use image::{ImageFormat, RgbImage};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mask::BinaryMask;
use crate::view::{mask_from_gray, read_mask_png, view_dir};

pub const SEG_ENDPOINT_ENV: &str = "PASG_SEG_ENDPOINT";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GranularityLevel {
    /// 1 is the coarsest level.
    pub ordinal: u32,
    /// Provider-specific setting, passed through untouched.
    #[serde(default)]
    pub param: String,
}

impl GranularityLevel {
    pub fn new(ordinal: u32, param: &str) -> Self {
        Self {
            ordinal,
            param: param.to_string(),
        }
    }

    pub fn default_levels() -> Vec<Self> {
        vec![Self::new(1, "coarse"), Self::new(2, "medium"), Self::new(3, "fine")]
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SegError {
    #[error("unknown granularity level {0}")]
    UnknownGranularity(u32),
    #[error("segmentation provider unavailable: {0}")]
    Unavailable(String),
    #[error("segment is {got:?}, image is {expected:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("bad segmentation data: {0}")]
    BadData(String),
}

#[derive(Debug, Clone)]
pub struct SegmentationRequest<'a> {
    pub object_id: &'a str,
    pub view_id: usize,
    pub granularity: &'a GranularityLevel,
    pub image: &'a RgbImage,
}

impl SegmentationRequest<'_> {
    fn dims(&self) -> (usize, usize) {
        (self.image.width() as usize, self.image.height() as usize)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationResult {
    pub masks: Vec<BinaryMask>,
    pub areas: Vec<usize>,
}

impl SegmentationResult {
    pub fn from_masks(masks: Vec<BinaryMask>) -> Self {
        let areas = masks.iter().map(BinaryMask::area).collect();
        Self { masks, areas }
    }

    fn check_dims(self, expected: (usize, usize)) -> Result<Self, SegError> {
        for m in &self.masks {
            let got = (m.width(), m.height());
            if got != expected {
                return Err(SegError::DimensionMismatch { expected, got });
            }
        }
        Ok(self)
    }
}

pub trait SegProvider: Send + Sync {
    fn segment(&self, req: &SegmentationRequest) -> Result<SegmentationResult, SegError>;
}

/// Reads `view_<k>/gamma_<j>/seg_###.png` under an object directory.
pub struct FileSegProvider {
    root: PathBuf,
}

impl FileSegProvider {
    pub fn new(object_dir: &Path) -> Self {
        Self {
            root: object_dir.to_path_buf(),
        }
    }

    pub fn gamma_dir(object_dir: &Path, view_id: usize, ordinal: u32) -> PathBuf {
        view_dir(object_dir, view_id).join(format!("gamma_{ordinal}"))
    }
}

impl SegProvider for FileSegProvider {
    fn segment(&self, req: &SegmentationRequest) -> Result<SegmentationResult, SegError> {
        let dir = Self::gamma_dir(&self.root, req.view_id, req.granularity.ordinal);
        if !dir.is_dir() {
            return Err(SegError::UnknownGranularity(req.granularity.ordinal));
        }
        let mut files: Vec<PathBuf> = std::fs::read_dir(&dir)
            .map_err(|e| SegError::BadData(format!("{}: {e}", dir.display())))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with("seg_") && n.ends_with(".png"))
            })
            .collect();
        files.sort();
        let masks = files
            .iter()
            .map(|p| read_mask_png(p).map_err(|e| SegError::BadData(e.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        SegmentationResult::from_masks(masks).check_dims(req.dims())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProceduralFixture {
    /// Two touching disks: one merged mask at level 1, one per disk above.
    TwoCircles,
}

pub struct ProceduralSegProvider {
    pub fixture: ProceduralFixture,
}

impl ProceduralSegProvider {
    pub fn two_circles(width: usize, height: usize) -> [BinaryMask; 2] {
        let r = width.min(height) as f64 / 5.0;
        let cy = height as f64 / 2.0;
        let disk = |cx: f64| {
            BinaryMask::from_fn(width, height, |x, y| {
                let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
                dx * dx + dy * dy <= r * r
            })
        };
        let c = width as f64 / 2.0;
        [disk(c - 0.95 * r), disk(c + 0.95 * r)]
    }
}

impl SegProvider for ProceduralSegProvider {
    fn segment(&self, req: &SegmentationRequest) -> Result<SegmentationResult, SegError> {
        let (w, h) = req.dims();
        let [a, b] = Self::two_circles(w, h);
        let masks = match req.granularity.ordinal {
            0 => return Err(SegError::UnknownGranularity(0)),
            1 => vec![BinaryMask::from_fn(w, h, |x, y| a.get(x, y) || b.get(x, y))],
            _ => vec![a, b],
        };
        Ok(SegmentationResult::from_masks(masks))
    }
}

#[derive(Debug, Deserialize)]
struct WireResult {
    masks: Vec<String>,
    areas: Vec<usize>,
}

/// Client for a service exposing `POST /segment` and `GET /healthz`.
pub struct RemoteSegProvider {
    base: String,
    client: reqwest::blocking::Client,
}

impl RemoteSegProvider {
    pub fn new(base_url: &str, timeout: Duration) -> Result<Self, SegError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| SegError::Unavailable(e.to_string()))?;
        Ok(Self {
            base: base_url.trim_end_matches('/').to_string(),
            client,
        })
    }

    pub fn healthz(&self) -> Result<(), SegError> {
        let resp = self
            .client
            .get(format!("{}/healthz", self.base))
            .send()
            .map_err(|e| SegError::Unavailable(e.to_string()))?;
        if resp.status().is_success() {
            Ok(())
        } else {
            Err(SegError::Unavailable(format!("healthz returned {}", resp.status())))
        }
    }
}

pub fn encode_png(img: &RgbImage) -> Vec<u8> {
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, ImageFormat::Png).expect("PNG encoding to memory");
    buf.into_inner()
}

fn decode_mask(b64: &str) -> Result<BinaryMask, SegError> {
    let bytes = base64::engine::general_purpose::STANDARD
        .decode(b64.trim())
        .map_err(|e| SegError::BadData(format!("mask base64: {e}")))?;
    let img = image::load_from_memory_with_format(&bytes, ImageFormat::Png)
        .map_err(|e| SegError::BadData(format!("mask PNG: {e}")))?;
    Ok(mask_from_gray(&img.to_luma8()))
}

impl SegProvider for RemoteSegProvider {
    fn segment(&self, req: &SegmentationRequest) -> Result<SegmentationResult, SegError> {
        let part = reqwest::blocking::multipart::Part::bytes(encode_png(req.image))
            .file_name("image.png")
            .mime_str("image/png")
            .expect("static mime type");
        let form = reqwest::blocking::multipart::Form::new()
            .part("image", part)
            .text("granularity", req.granularity.ordinal.to_string());
        let resp = self
            .client
            .post(format!("{}/segment", self.base))
            .multipart(form)
            .send()
            .map_err(|e| SegError::Unavailable(e.to_string()))?;
        match resp.status().as_u16() {
            200..=299 => {}
            422 => return Err(SegError::UnknownGranularity(req.granularity.ordinal)),
            s @ (503 | 500..=599) => return Err(SegError::Unavailable(format!("HTTP {s}"))),
            s => return Err(SegError::BadData(format!("HTTP {s}"))),
        }
        let wire: WireResult = resp.json().map_err(|e| SegError::BadData(e.to_string()))?;
        if wire.masks.len() != wire.areas.len() {
            return Err(SegError::BadData("masks and areas differ in length".into()));
        }
        let masks = wire.masks.iter().map(|m| decode_mask(m)).collect::<Result<Vec<_>, _>>()?;
        SegmentationResult {
            masks,
            areas: wire.areas,
        }
        .check_dims(req.dims())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(p: &dyn SegProvider, ordinal: u32, img: &RgbImage) -> Result<SegmentationResult, SegError> {
        let g = GranularityLevel::new(ordinal, "");
        p.segment(&SegmentationRequest {
            object_id: "o",
            view_id: 0,
            granularity: &g,
            image: img,
        })
    }

    #[test]
    fn two_circles_split_with_granularity() {
        let img = RgbImage::new(100, 80);
        let p = ProceduralSegProvider {
            fixture: ProceduralFixture::TwoCircles,
        };
        assert_eq!(run(&p, 1, &img).unwrap().masks.len(), 1);
        assert_eq!(run(&p, 2, &img).unwrap().masks.len(), 2);
        let merged = &run(&p, 1, &img).unwrap().masks[0];
        let labels = crate::mask::connected_components(merged).unwrap();
        assert_eq!(labels.regions.len(), 1);
    }

    #[test]
    fn missing_level_dir_is_unknown() {
        let dir = tempfile::tempdir().unwrap();
        let g1 = FileSegProvider::gamma_dir(dir.path(), 0, 1);
        std::fs::create_dir_all(&g1).unwrap();
        crate::view::write_mask_png(&g1.join("seg_000.png"), &BinaryMask::from_fn(8, 8, |x, _| x < 4)).unwrap();
        let p = FileSegProvider::new(dir.path());
        let img = RgbImage::new(8, 8);
        assert_eq!(run(&p, 1, &img).unwrap().areas, vec![32]);
        assert_eq!(run(&p, 3, &img), Err(SegError::UnknownGranularity(3)));
        assert!(matches!(run(&p, 1, &RgbImage::new(9, 8)), Err(SegError::DimensionMismatch { .. })));
    }
}
