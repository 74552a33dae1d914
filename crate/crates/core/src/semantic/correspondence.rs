use std::fmt;

use serde::de::{self, Deserializer, Visitor};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};

use super::{RecordClass, SymAxis};

const NONE_TOKEN: &str = "None";
const ERROR_TOKEN: &str = "Error";
pub const POS_PLACEHOLDER: &str = "[x, y, z]";
pub const DIR_PLACEHOLDER: &str = "[dx, dy, dz]";

/// Matched keypoint for a position, or a missing-annotation token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PosId {
    Index(u32),
    /// Not visible in any view.
    None,
    /// Visible but no keypoint marks it.
    Error,
}

/// Matched orientation: a keypoint pair (from first toward second), a signed
/// principal axis, or a missing-annotation token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OriId {
    PointPair(u32, u32),
    Axis(SymAxis),
    None,
    Error,
}

impl PosId {
    pub fn index(self) -> Option<u32> {
        match self {
            PosId::Index(i) => Some(i),
            _ => None,
        }
    }

    pub fn is_matched(self) -> bool {
        matches!(self, PosId::Index(_))
    }
}

impl OriId {
    pub fn indices(self) -> Vec<u32> {
        match self {
            OriId::PointPair(a, b) => vec![a, b],
            _ => Vec::new(),
        }
    }

    pub fn is_matched(self) -> bool {
        matches!(self, OriId::PointPair(..) | OriId::Axis(_))
    }
}

/// A `Pos`/`Orientation` value: the literal placeholder or resolved numbers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Vec3Field {
    PosPlaceholder,
    DirPlaceholder,
    Value([f64; 3]),
}

impl Serialize for PosId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            PosId::Index(i) => s.serialize_u32(*i),
            PosId::None => s.serialize_str(NONE_TOKEN),
            PosId::Error => s.serialize_str(ERROR_TOKEN),
        }
    }
}

impl<'de> Deserialize<'de> for PosId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = PosId;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a keypoint index, \"None\" or \"Error\"")
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<PosId, E> {
                u32::try_from(v)
                    .map(PosId::Index)
                    .map_err(|_| E::custom(format!("keypoint index {v} out of range")))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<PosId, E> {
                u64::try_from(v)
                    .map_err(|_| E::custom(format!("negative keypoint index {v}")))
                    .and_then(|v| self.visit_u64(v))
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<PosId, E> {
                match v {
                    NONE_TOKEN => Ok(PosId::None),
                    ERROR_TOKEN => Ok(PosId::Error),
                    _ => Err(E::invalid_value(de::Unexpected::Str(v), &self)),
                }
            }
        }
        d.deserialize_any(V)
    }
}

impl Serialize for OriId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            OriId::PointPair(a, b) => [*a, *b].serialize(s),
            OriId::Axis(axis) => axis.components().serialize(s),
            OriId::None => s.serialize_str(NONE_TOKEN),
            OriId::Error => s.serialize_str(ERROR_TOKEN),
        }
    }
}

impl<'de> Deserialize<'de> for OriId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = OriId;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a keypoint pair [a, b], a signed unit axis [x, y, z], \"None\" or \"Error\"")
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<OriId, E> {
                match v {
                    NONE_TOKEN => Ok(OriId::None),
                    ERROR_TOKEN => Ok(OriId::Error),
                    _ => Err(E::invalid_value(de::Unexpected::Str(v), &self)),
                }
            }

            fn visit_seq<A: de::SeqAccess<'de>>(self, mut seq: A) -> Result<OriId, A::Error> {
                let mut vals: Vec<i64> = Vec::new();
                while let Some(v) = seq.next_element::<i64>()? {
                    vals.push(v);
                }
                match vals[..] {
                    [a, b] if a >= 0 && b >= 0 && a <= u32::MAX as i64 && b <= u32::MAX as i64 => {
                        Ok(OriId::PointPair(a as u32, b as u32))
                    }
                    [x, y, z] => SymAxis::from_components([x, y, z])
                        .map(OriId::Axis)
                        .ok_or_else(|| de::Error::custom(format!("[{x}, {y}, {z}] is not a signed unit axis"))),
                    _ => Err(de::Error::custom(format!("bad orientation id {vals:?}"))),
                }
            }
        }
        d.deserialize_any(V)
    }
}

impl Serialize for Vec3Field {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Vec3Field::PosPlaceholder => s.serialize_str(POS_PLACEHOLDER),
            Vec3Field::DirPlaceholder => s.serialize_str(DIR_PLACEHOLDER),
            Vec3Field::Value(v) => v.serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for Vec3Field {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = Vec3Field;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("\"[x, y, z]\", \"[dx, dy, dz]\" or three numbers")
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<Vec3Field, E> {
                match v {
                    POS_PLACEHOLDER => Ok(Vec3Field::PosPlaceholder),
                    DIR_PLACEHOLDER => Ok(Vec3Field::DirPlaceholder),
                    _ => Err(E::invalid_value(de::Unexpected::Str(v), &self)),
                }
            }

            fn visit_seq<A: de::SeqAccess<'de>>(self, mut seq: A) -> Result<Vec3Field, A::Error> {
                let mut vals = Vec::new();
                while let Some(v) = seq.next_element::<f64>()? {
                    vals.push(v);
                }
                <[f64; 3]>::try_from(vals)
                    .map(Vec3Field::Value)
                    .map_err(|v| de::Error::invalid_length(v.len(), &self))
            }
        }
        d.deserialize_any(V)
    }
}

fn probability<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
    let p = f64::deserialize(d)?;
    if (0.0..=1.0).contains(&p) {
        Ok(Some(p))
    } else {
        Err(de::Error::custom(format!("probability {p} outside [0, 1]")))
    }
}

fn pos_placeholder() -> Vec3Field {
    Vec3Field::PosPlaceholder
}

fn dir_placeholder() -> Vec3Field {
    Vec3Field::DirPlaceholder
}

/// One semantic primitive bound to geometry. Field names on the wire follow
/// the annotation format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Correspondence {
    #[serde(skip, default = "default_class")]
    pub class: RecordClass,
    #[serde(rename = "Stage")]
    pub stage: String,
    #[serde(rename = "pos_ID")]
    pub pos_id: PosId,
    #[serde(
        rename = "pos_Probability",
        default,
        deserialize_with = "probability",
        skip_serializing_if = "Option::is_none"
    )]
    pub pos_probability: Option<f64>,
    #[serde(rename = "ori_ID")]
    pub ori_id: OriId,
    #[serde(
        rename = "ori_Probability",
        default,
        deserialize_with = "probability",
        skip_serializing_if = "Option::is_none"
    )]
    pub ori_probability: Option<f64>,
    #[serde(rename = "Pos", default = "pos_placeholder")]
    pub pos: Vec3Field,
    #[serde(rename = "Orientation", default = "dir_placeholder")]
    pub orientation: Vec3Field,
    #[serde(rename = "Description")]
    pub description: String,
}

fn default_class() -> RecordClass {
    RecordClass::Main
}

impl Correspondence {
    pub fn key(&self) -> EntryKey {
        EntryKey::new(self.class, &self.stage, &self.description)
    }

    /// Both ids matched and every present probability at or above `threshold`.
    pub fn passes(&self, threshold: f64) -> bool {
        self.pos_id.is_matched()
            && self.ori_id.is_matched()
            && [self.pos_probability, self.ori_probability]
                .iter()
                .flatten()
                .all(|p| *p >= threshold)
    }

    pub fn referenced_indices(&self) -> Vec<u32> {
        self.pos_id.index().into_iter().chain(self.ori_id.indices()).collect()
    }
}

/// Identity of a semantic primitive: several correspondences (candidates)
/// may share one key.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EntryKey {
    pub class: RecordClass,
    pub stage: String,
    pub description: String,
}

impl EntryKey {
    pub fn new(class: RecordClass, stage: &str, description: &str) -> Self {
        Self {
            class,
            stage: stage.to_string(),
            description: description.to_string(),
        }
    }
}

impl fmt::Display for EntryKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.class, self.stage, self.description)
    }
}

/// Correspondences kept in canonical order (class, then serialized entry),
/// so equal sets compare and serialize identically regardless of insertion
/// order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CorrespondenceSet {
    entries: Vec<Correspondence>,
}

fn entry_sort_key(c: &Correspondence) -> (RecordClass, String) {
    (c.class, serde_json::to_string(c).expect("entry serializes"))
}

impl CorrespondenceSet {
    pub fn new(mut entries: Vec<Correspondence>) -> Self {
        entries.sort_by_cached_key(entry_sort_key);
        Self { entries }
    }

    pub fn entries(&self) -> &[Correspondence] {
        &self.entries
    }

    pub fn into_entries(self) -> Vec<Correspondence> {
        self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn of_class(&self, class: RecordClass) -> impl Iterator<Item = &Correspondence> {
        self.entries.iter().filter(move |c| c.class == class)
    }

    pub fn map_entries(self, f: impl FnMut(Correspondence) -> Correspondence) -> Self {
        Self::new(self.entries.into_iter().map(f).collect())
    }
}

impl FromIterator<Correspondence> for CorrespondenceSet {
    fn from_iter<I: IntoIterator<Item = Correspondence>>(iter: I) -> Self {
        Self::new(iter.into_iter().collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryIssue {
    LowConfidence,
    Unmatched,
    DanglingRef,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryReport {
    pub entry: usize,
    pub key: EntryKey,
    pub issues: Vec<EntryIssue>,
}

impl EntryReport {
    pub fn is_ok(&self) -> bool {
        self.issues.is_empty()
    }
}

/// Findings per entry of a correspondence set, in entry order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub entries: Vec<EntryReport>,
}

impl ValidationReport {
    pub fn with_issue(&self, issue: EntryIssue) -> impl Iterator<Item = usize> + '_ {
        self.entries
            .iter()
            .filter(move |r| r.issues.contains(&issue))
            .map(|r| r.entry)
    }

    pub fn all_ok(&self) -> bool {
        self.entries.iter().all(EntryReport::is_ok)
    }
}

/// Check probabilities against `threshold`, missing-annotation tokens, and
/// keypoint references against `indices`.
pub fn validate_correspondences(set: &CorrespondenceSet, indices: &[u32], threshold: f64) -> ValidationReport {
    let entries = set
        .entries()
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let mut issues = Vec::new();
            if [c.pos_probability, c.ori_probability].iter().flatten().any(|p| *p < threshold) {
                issues.push(EntryIssue::LowConfidence);
            }
            if !c.pos_id.is_matched() || !c.ori_id.is_matched() {
                issues.push(EntryIssue::Unmatched);
            }
            if c.referenced_indices().iter().any(|k| !indices.contains(k)) {
                issues.push(EntryIssue::DanglingRef);
            }
            EntryReport {
                entry: i,
                key: c.key(),
                issues,
            }
        })
        .collect();
    ValidationReport { entries }
}
