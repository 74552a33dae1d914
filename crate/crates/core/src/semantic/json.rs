//! Canonical annotation JSON.
//!
//! Output uses two-space indentation, arrays of scalars on one line, a fixed
//! key order and a trailing newline, so equal records always produce equal
//! bytes.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use super::{Correspondence, CorrespondenceSet, RecordClass};
use crate::keypoints::KeypointSource;
use crate::lifting::{CalibrationStatus, Keypoint3D, PrincipalFrame, Vec3};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SemanticError {
    #[error("parse error at byte {offset} (at `{path}`): {message}")]
    Parse {
        offset: usize,
        path: String,
        message: String,
    },
    #[error("schema error: {0}")]
    Schema(String),
}

impl SemanticError {
    /// `(class, entry index)` when the error path points into a class array.
    pub fn entry_location(&self) -> Option<(RecordClass, usize)> {
        let SemanticError::Parse { path, .. } = self else {
            return None;
        };
        let tail = path.strip_prefix("annotations.").unwrap_or(path);
        let (class, rest) = tail.split_once('[')?;
        let idx = rest.split_once(']')?.0.parse().ok()?;
        Some((class.parse().ok()?, idx))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotatedKeypoint {
    pub index: u32,
    pub pos: [f64; 3],
    pub source: KeypointSource,
    pub views: Vec<usize>,
}

impl From<&Keypoint3D> for AnnotatedKeypoint {
    fn from(k: &Keypoint3D) -> Self {
        let mut views: Vec<usize> = k.views().collect();
        views.sort_unstable();
        views.dedup();
        Self {
            index: k.index,
            pos: [k.pos.x, k.pos.y, k.pos.z],
            source: k.source,
            views,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameInfo {
    pub origin: [f64; 3],
    pub x_axis: [f64; 3],
    pub y_axis: [f64; 3],
    pub z_axis: [f64; 3],
    pub calibration: Option<CalibrationStatus>,
}

fn arr(v: &Vec3) -> [f64; 3] {
    [v.x, v.y, v.z]
}

impl FrameInfo {
    pub fn new(frame: &PrincipalFrame, calibration: Option<CalibrationStatus>) -> Self {
        Self {
            origin: arr(&frame.origin),
            x_axis: arr(&frame.x_axis),
            y_axis: arr(&frame.y_axis),
            z_axis: arr(&frame.z_axis),
            calibration,
        }
    }

    pub fn frame(&self) -> PrincipalFrame {
        PrincipalFrame {
            origin: self.origin.into(),
            x_axis: self.x_axis.into(),
            y_axis: self.y_axis.into(),
            z_axis: self.z_axis.into(),
        }
    }

    pub fn deviated(&self) -> bool {
        matches!(self.calibration, Some(CalibrationStatus::Rebuilt { .. }))
    }
}

/// Everything written to `<object_id>.annotation.json`.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationRecord {
    pub object_id: String,
    pub frame: FrameInfo,
    /// Sorted by index.
    pub keypoints: Vec<AnnotatedKeypoint>,
    pub correspondences: CorrespondenceSet,
}

impl AnnotationRecord {
    pub fn keypoint_indices(&self) -> Vec<u32> {
        self.keypoints.iter().map(|k| k.index).collect()
    }

    pub fn keypoint(&self, index: u32) -> Option<&AnnotatedKeypoint> {
        self.keypoints.iter().find(|k| k.index == index)
    }
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClassBlock {
    #[serde(rename = "Main", default, skip_serializing_if = "Vec::is_empty")]
    main: Vec<Correspondence>,
    #[serde(rename = "Anchor", default, skip_serializing_if = "Vec::is_empty")]
    anchor: Vec<Correspondence>,
    #[serde(rename = "Grasp", default, skip_serializing_if = "Vec::is_empty")]
    grasp: Vec<Correspondence>,
    #[serde(rename = "Actuation", default, skip_serializing_if = "Vec::is_empty")]
    actuation: Vec<Correspondence>,
    #[serde(rename = "Hinge", default, skip_serializing_if = "Vec::is_empty")]
    hinge: Vec<Correspondence>,
}

impl ClassBlock {
    fn slot(&mut self, class: RecordClass) -> &mut Vec<Correspondence> {
        match class {
            RecordClass::Main => &mut self.main,
            RecordClass::Anchor => &mut self.anchor,
            RecordClass::Grasp => &mut self.grasp,
            RecordClass::Actuation => &mut self.actuation,
            RecordClass::Hinge => &mut self.hinge,
        }
    }

    fn from_set(set: &CorrespondenceSet) -> Self {
        let mut block = Self::default();
        for c in set.entries() {
            block.slot(c.class).push(c.clone());
        }
        block
    }

    /// Entries in class order, each class in document order.
    fn into_entries(mut self) -> Vec<Correspondence> {
        let mut all = Vec::new();
        for class in RecordClass::ALL {
            all.extend(std::mem::take(self.slot(class)).into_iter().map(|mut c| {
                c.class = class;
                c
            }));
        }
        all
    }

    fn into_set(self) -> CorrespondenceSet {
        CorrespondenceSet::new(self.into_entries())
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireRecord {
    pasg_schema: u32,
    object_id: String,
    frame_deviated: bool,
    frame: FrameInfo,
    keypoints: Vec<AnnotatedKeypoint>,
    annotations: ClassBlock,
}

fn is_scalar(v: &Value) -> bool {
    !matches!(v, Value::Array(_) | Value::Object(_))
}

fn write_value(out: &mut String, v: &Value, indent: usize) {
    let pad = |n: usize| " ".repeat(n);
    match v {
        Value::Array(items) if items.is_empty() => out.push_str("[]"),
        Value::Array(items) if items.iter().all(is_scalar) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_value(out, item, indent);
            }
            out.push(']');
        }
        Value::Array(items) => {
            out.push_str("[\n");
            for (i, item) in items.iter().enumerate() {
                out.push_str(&pad(indent + 2));
                write_value(out, item, indent + 2);
                out.push_str(if i + 1 < items.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(indent));
            out.push(']');
        }
        Value::Object(map) if map.is_empty() => out.push_str("{}"),
        Value::Object(map) => {
            out.push_str("{\n");
            for (i, (k, item)) in map.iter().enumerate() {
                out.push_str(&pad(indent + 2));
                out.push_str(&Value::String(k.clone()).to_string());
                out.push_str(": ");
                write_value(out, item, indent + 2);
                out.push_str(if i + 1 < map.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(indent));
            out.push('}');
        }
        scalar => out.push_str(&scalar.to_string()),
    }
}

/// Canonical pretty form of any serializable value.
pub fn to_canonical_string<T: Serialize>(value: &T) -> String {
    let v = serde_json::to_value(value).expect("value serializes to JSON");
    let mut out = String::new();
    write_value(&mut out, &v, 0);
    out.push('\n');
    out
}

/// The class-grouped block alone (`{}` when empty).
pub fn serialize_correspondences(set: &CorrespondenceSet) -> String {
    to_canonical_string(&ClassBlock::from_set(set))
}

pub fn serialize_annotation(record: &AnnotationRecord) -> Vec<u8> {
    let mut keypoints = record.keypoints.clone();
    keypoints.sort_by_key(|k| k.index);
    let wire = WireRecord {
        pasg_schema: SCHEMA_VERSION,
        object_id: record.object_id.clone(),
        frame_deviated: record.frame.deviated(),
        frame: record.frame.clone(),
        keypoints,
        annotations: ClassBlock::from_set(&record.correspondences),
    };
    to_canonical_string(&wire).into_bytes()
}

fn byte_offset(bytes: &[u8], line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let line_start: usize = bytes
        .split_inclusive(|b| *b == b'\n')
        .take(line - 1)
        .map(<[u8]>::len)
        .sum();
    (line_start + column.saturating_sub(1)).min(bytes.len())
}

fn syntax_error(bytes: &[u8], e: &serde_json::Error, path: String) -> SemanticError {
    SemanticError::Parse {
        offset: byte_offset(bytes, e.line(), e.column()),
        path,
        message: e.to_string(),
    }
}

fn check_classes(block: &Value, bytes: &[u8]) -> Result<(), SemanticError> {
    match block {
        Value::Object(map) => {
            for key in map.keys() {
                if !RecordClass::ALL.iter().any(|c| c.as_str() == key) {
                    return Err(SemanticError::Schema(format!("unknown record class `{key}`")));
                }
            }
            Ok(())
        }
        _ => Err(SemanticError::Parse {
            offset: bytes.iter().position(|b| !b.is_ascii_whitespace()).unwrap_or(0),
            path: String::new(),
            message: "expected an object of record classes".into(),
        }),
    }
}

fn typed<T: serde::de::DeserializeOwned>(bytes: &[u8]) -> Result<T, SemanticError> {
    let mut de = serde_json::Deserializer::from_slice(bytes);
    serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        syntax_error(bytes, e.inner(), path)
    })
}

/// Parse a class-grouped block, keeping each class's entries in document
/// order.
pub fn parse_class_entries(bytes: &[u8]) -> Result<Vec<Correspondence>, SemanticError> {
    let v: Value = serde_json::from_slice(bytes).map_err(|e| syntax_error(bytes, &e, String::new()))?;
    check_classes(&v, bytes)?;
    Ok(typed::<ClassBlock>(bytes)?.into_entries())
}

pub fn parse_correspondences(bytes: &[u8]) -> Result<CorrespondenceSet, SemanticError> {
    parse_class_entries(bytes).map(CorrespondenceSet::new)
}

pub fn parse_annotation(bytes: &[u8]) -> Result<AnnotationRecord, SemanticError> {
    let v: Value = serde_json::from_slice(bytes).map_err(|e| syntax_error(bytes, &e, String::new()))?;
    match v.get("pasg_schema").and_then(Value::as_u64) {
        Some(n) if n == SCHEMA_VERSION as u64 => {}
        Some(n) => return Err(SemanticError::Schema(format!("unsupported pasg_schema {n}"))),
        None => {}
    }
    if let Some(block) = v.get("annotations") {
        check_classes(block, bytes)?;
    }
    let wire: WireRecord = typed(bytes)?;
    let mut keypoints = wire.keypoints;
    keypoints.sort_by_key(|k| k.index);
    Ok(AnnotationRecord {
        object_id: wire.object_id,
        frame: wire.frame,
        keypoints,
        correspondences: wire.annotations.into_set(),
    })
}
