//! Response parsers. The identification block is read leniently since models
//! wrap it in prose; the alignment JSON is read strictly.

use std::sync::LazyLock;

use regex::Regex;
use thiserror::Error;

use crate::semantic::json::parse_class_entries;
use crate::semantic::{
    build_task_specs, CorrespondenceSet, KeyPrimitive, OriId, PosId, RecordClass, SemanticError, TaskSpec, Vec3Field,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IdentifyError {
    #[error("no key_primitives block in response")]
    NoStructuredBlock,
    #[error("key primitive {index}: {reason}")]
    MalformedEntry { index: usize, reason: String },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AlignParseError {
    #[error(transparent)]
    Parse(#[from] SemanticError),
    #[error("{class} entry {index}: {reason}")]
    MalformedEntry {
        class: RecordClass,
        index: usize,
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct IdentifyResult {
    /// Declared primitives, first appearance wins on duplicate keys.
    pub primitives: Vec<KeyPrimitive>,
    /// `(use, stages)` decompositions found in the prose.
    pub plans: Vec<(String, Vec<String>)>,
}

impl IdentifyResult {
    pub fn task_specs(&self) -> Vec<TaskSpec> {
        build_task_specs(&self.plans, &self.primitives)
    }
}

static BLOCK_START: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)key_primitives\s*[:=]\s*\[").unwrap());
static STAGES: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)(\d+)\s+stages?\s*:").unwrap());
static QUOTED: LazyLock<Regex> = LazyLock::new(|| Regex::new(r#""([^"\n]*)""#).unwrap());
static USE_NAME: LazyLock<Regex> = LazyLock::new(|| Regex::new(r#""([^"\n]+)"\s*:"#).unwrap());

/// Index of the bracket closing the one at `open`, skipping double-quoted
/// strings and `#` comments.
fn matching_close(s: &[u8], open: usize) -> Option<usize> {
    let (o, c) = (s[open], if s[open] == b'[' { b']' } else { b'}' });
    let mut depth = 0usize;
    let mut i = open;
    while i < s.len() {
        match s[i] {
            b'"' => {
                i += 1;
                while i < s.len() && s[i] != b'"' {
                    if s[i] == b'\\' {
                        i += 1;
                    }
                    i += 1;
                }
            }
            b'#' => {
                while i < s.len() && s[i] != b'\n' {
                    i += 1;
                }
                continue;
            }
            b if b == o => depth += 1,
            b if b == c => {
                depth -= 1;
                if depth == 0 {
                    return Some(i);
                }
            }
            _ => {}
        }
        i += 1;
    }
    None
}

/// Top-level `{...}` spans inside a block body.
fn entry_spans(body: &str) -> Vec<(usize, usize)> {
    let b = body.as_bytes();
    let mut spans = Vec::new();
    let mut i = 0;
    while i < b.len() {
        match b[i] {
            b'#' => {
                while i < b.len() && b[i] != b'\n' {
                    i += 1;
                }
            }
            b'{' => match matching_close(b, i) {
                Some(end) => {
                    spans.push((i + 1, end));
                    i = end;
                }
                None => {
                    spans.push((i + 1, b.len()));
                    break;
                }
            },
            _ => {}
        }
        i += 1;
    }
    spans
}

fn read_quoted(chars: &[char], mut i: usize) -> (String, usize) {
    let q = chars[i];
    i += 1;
    let mut out = String::new();
    while i < chars.len() && chars[i] != q {
        if chars[i] == '\\' && q == '"' && i + 1 < chars.len() {
            i += 1;
            out.push(match chars[i] {
                'n' => '\n',
                't' => '\t',
                other => other,
            });
        } else {
            out.push(chars[i]);
        }
        i += 1;
    }
    (out, (i + 1).min(chars.len()))
}

/// `key: value` pairs of one entry; keys lower-cased, values unquoted.
fn entry_fields(body: &str) -> Result<Vec<(String, String)>, String> {
    let chars: Vec<char> = body.chars().collect();
    let mut fields = Vec::new();
    let mut i = 0;
    let skip = |i: &mut usize| {
        while *i < chars.len() && (chars[*i].is_whitespace() || chars[*i] == ',') {
            *i += 1;
        }
    };
    loop {
        skip(&mut i);
        if i >= chars.len() {
            return Ok(fields);
        }
        let key = if chars[i] == '"' || chars[i] == '\'' {
            let (k, next) = read_quoted(&chars, i);
            i = next;
            k
        } else {
            let start = i;
            while i < chars.len() && chars[i] != ':' {
                i += 1;
            }
            chars[start..i].iter().collect::<String>()
        };
        while i < chars.len() && chars[i].is_whitespace() {
            i += 1;
        }
        if i >= chars.len() || chars[i] != ':' {
            return Err(format!("expected `:` after `{}`", key.trim()));
        }
        i += 1;
        while i < chars.len() && chars[i].is_whitespace() {
            i += 1;
        }
        let value = match chars.get(i) {
            Some('"') | Some('\'') => {
                let (v, next) = read_quoted(&chars, i);
                i = next;
                v
            }
            Some('[') => {
                let start = i;
                while i < chars.len() && chars[i] != ']' {
                    i += 1;
                }
                i = (i + 1).min(chars.len());
                chars[start..i].iter().collect()
            }
            _ => {
                let start = i;
                while i < chars.len() && chars[i] != ',' {
                    i += 1;
                }
                chars[start..i].iter().collect::<String>().trim().to_string()
            }
        };
        fields.push((key.trim().to_lowercase(), value));
    }
}

fn vec3_field(raw: &str, placeholder: Vec3Field) -> Vec3Field {
    let inner = raw.trim().trim_start_matches('[').trim_end_matches(']');
    let nums: Option<Vec<f64>> = inner.split(',').map(|t| t.trim().parse::<f64>().ok()).collect();
    match nums.as_deref() {
        Some(&[a, b, c]) => Vec3Field::Value([a, b, c]),
        _ => placeholder,
    }
}

fn parse_entry(index: usize, body: &str) -> Result<KeyPrimitive, IdentifyError> {
    let malformed = |reason: String| IdentifyError::MalformedEntry { index, reason };
    let fields = entry_fields(body).map_err(malformed)?;
    let get = |names: &[&str]| {
        fields
            .iter()
            .find(|(k, _)| names.contains(&k.as_str()))
            .map(|(_, v)| v.trim().to_string())
    };
    let class_raw = get(&["type", "class"]).ok_or_else(|| malformed("missing Type".into()))?;
    let class: RecordClass = class_raw.trim_matches('*').parse().map_err(malformed)?;
    let stage = get(&["stage"]).filter(|s| !s.is_empty()).ok_or_else(|| malformed("missing Stage".into()))?;
    let description = get(&["description"])
        .filter(|s| !s.is_empty())
        .ok_or_else(|| malformed("missing Description".into()))?;
    Ok(KeyPrimitive {
        class,
        stage,
        description,
        pos: get(&["pos", "position"]).map_or(Vec3Field::PosPlaceholder, |v| vec3_field(&v, Vec3Field::PosPlaceholder)),
        orientation: get(&["orientation"])
            .map_or(Vec3Field::DirPlaceholder, |v| vec3_field(&v, Vec3Field::DirPlaceholder)),
    })
}

fn parse_plans(text: &str, blocks: &[(usize, usize)]) -> Vec<(String, Vec<String>)> {
    let in_block = |pos: usize| blocks.iter().any(|&(a, b)| pos >= a && pos <= b);
    let heads: Vec<regex::Captures> = STAGES.captures_iter(text).filter(|c| !in_block(c.get(0).unwrap().start())).collect();
    let mut plans: Vec<(String, Vec<String>)> = Vec::new();
    let mut prev_end = 0;
    for (h, cap) in heads.iter().enumerate() {
        let m = cap.get(0).unwrap();
        let count: usize = cap[1].parse().unwrap_or(0);
        let Some(name) = USE_NAME
            .captures_iter(&text[prev_end..m.start()])
            .last()
            .map(|c| c[1].trim().to_string())
        else {
            prev_end = m.end();
            continue;
        };
        let stop = heads
            .get(h + 1)
            .map_or(text.len(), |c| c.get(0).unwrap().start())
            .min(blocks.iter().map(|b| b.0).filter(|&b| b > m.end()).min().unwrap_or(text.len()));
        let region = &text[m.end()..stop];
        let mut stages = Vec::new();
        for q in QUOTED.captures_iter(region) {
            let after = region[q.get(0).unwrap().end()..].trim_start();
            if after.starts_with(':') || stages.len() == count {
                break;
            }
            stages.push(q[1].trim().to_string());
        }
        prev_end = m.end();
        if !stages.is_empty() && !plans.iter().any(|(n, _)| *n == name) {
            plans.push((name, stages));
        }
    }
    plans
}

/// Extract the `key_primitives = [...]` block(s) and any `N stages: "..."`
/// decompositions from a free-form response.
pub fn parse_identify_response(text: &str) -> Result<IdentifyResult, IdentifyError> {
    let mut blocks = Vec::new();
    for m in BLOCK_START.find_iter(text) {
        let open = m.end() - 1;
        if blocks.iter().any(|&(a, b)| open > a && open < b) {
            continue;
        }
        let close = matching_close(text.as_bytes(), open).unwrap_or(text.len());
        blocks.push((open, close));
    }
    if blocks.is_empty() {
        return Err(IdentifyError::NoStructuredBlock);
    }

    let mut primitives: Vec<KeyPrimitive> = Vec::new();
    let mut index = 0;
    for &(open, close) in &blocks {
        let body = &text[open + 1..close];
        for (a, b) in entry_spans(body) {
            let p = parse_entry(index, &body[a..b])?;
            index += 1;
            if !primitives.iter().any(|q| q.key() == p.key()) {
                primitives.push(p);
            }
        }
    }
    Ok(IdentifyResult {
        primitives,
        plans: parse_plans(text, &blocks),
    })
}

static FENCE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?s)```[A-Za-z]*\s*\n(.*?)```").unwrap());
static BARE_POS: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(:\s*)\[\s*x\s*,\s*y\s*,\s*z\s*\]").unwrap());
static BARE_DIR: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(:\s*)\[\s*dx\s*,\s*dy\s*,\s*dz\s*\]").unwrap());

/// Parse the class-grouped alignment JSON. A surrounding code fence is
/// removed and bare `[x, y, z]` / `[dx, dy, dz]` placeholders are accepted;
/// anything else must be valid JSON.
pub fn parse_alignment_response(text: &str) -> Result<CorrespondenceSet, AlignParseError> {
    let body = FENCE.captures(text).map_or(text, |c| c.get(1).unwrap().as_str()).trim();
    let body = BARE_POS.replace_all(body, "${1}\"[x, y, z]\"");
    let body = BARE_DIR.replace_all(&body, "${1}\"[dx, dy, dz]\"");
    let entries = parse_class_entries(body.as_bytes()).map_err(|e| match e.entry_location() {
        Some((class, index)) => AlignParseError::MalformedEntry {
            class,
            index,
            reason: e.to_string(),
        },
        None => AlignParseError::Parse(e),
    })?;

    let mut seen = std::collections::HashMap::<RecordClass, usize>::new();
    for c in &entries {
        let index = *seen.entry(c.class).and_modify(|n| *n += 1).or_insert(0);
        let missing = if matches!(c.pos_id, PosId::Index(_)) && c.pos_probability.is_none() {
            Some("pos_ID without pos_Probability")
        } else if matches!(c.ori_id, OriId::PointPair(..) | OriId::Axis(_)) && c.ori_probability.is_none() {
            Some("ori_ID without ori_Probability")
        } else {
            None
        };
        if let Some(reason) = missing {
            return Err(AlignParseError::MalformedEntry {
                class: c.class,
                index,
                reason: reason.into(),
            });
        }
    }
    Ok(CorrespondenceSet::new(entries))
}
