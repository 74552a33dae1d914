//! Prompt construction, response parsing and provider access for the
//! vision-language aligner.

pub mod http;
mod parse;
pub mod provider;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use parse::{parse_alignment_response, parse_identify_response, AlignParseError, IdentifyError, IdentifyResult};
pub use provider::{
    query, BoundedProvider, ProviderError, RetryPolicy, ScriptedProvider, Transcript, VlmProvider, VlmRequest,
};

use crate::semantic::{KeyPrimitive, Vec3Field};

pub const ANNOTATE_TEMPLATE: &str = include_str!("../../assets/prompts/annotate_v1.txt");
pub const ALIGN_TEMPLATE: &str = include_str!("../../assets/prompts/align_v1.txt");
pub const SEMANTIC_SLOT: &str = "{{semantic_annotations}}";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PromptError {
    #[error("at least one overlay image is required")]
    NoImages,
    #[error("no semantic primitives to align")]
    EmptySemantics,
}

/// Prompt text plus the images attached to it, in order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub text: String,
    pub images: Vec<PathBuf>,
}

impl Prompt {
    /// Hex digest over the text and image paths.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.text.as_bytes());
        for img in &self.images {
            h.update([0u8]);
            h.update(img.to_string_lossy().as_bytes());
        }
        hex::encode(h.finalize())
    }
}

pub fn build_identify_prompt(overlays: &[PathBuf]) -> Result<Prompt, PromptError> {
    if overlays.is_empty() {
        return Err(PromptError::NoImages);
    }
    Ok(Prompt {
        text: ANNOTATE_TEMPLATE.to_string(),
        images: overlays.to_vec(),
    })
}

fn vec3_literal(v: &Vec3Field) -> String {
    match v {
        Vec3Field::PosPlaceholder => "[x, y, z]".into(),
        Vec3Field::DirPlaceholder => "[dx, dy, dz]".into(),
        Vec3Field::Value([a, b, c]) => format!("[{a}, {b}, {c}]"),
    }
}

/// Render primitives in the `key_primitives = [...]` block form.
pub fn format_key_primitives(entries: &[KeyPrimitive]) -> String {
    let mut out = String::from("key_primitives = [\n");
    for (i, e) in entries.iter().enumerate() {
        out.push_str(&format!(
            "    {{Type: {}, Pos: {}, Orientation: {}, Stage: {}, Description: {}}}",
            e.class,
            vec3_literal(&e.pos),
            vec3_literal(&e.orientation),
            serde_json::Value::String(e.stage.clone()),
            serde_json::Value::String(e.description.clone()),
        ));
        out.push_str(if i + 1 < entries.len() { ",\n" } else { "\n" });
    }
    out.push(']');
    out
}

pub fn build_alignment_prompt(semantics: &[KeyPrimitive], overlays: &[PathBuf]) -> Result<Prompt, PromptError> {
    if semantics.is_empty() {
        return Err(PromptError::EmptySemantics);
    }
    if overlays.is_empty() {
        return Err(PromptError::NoImages);
    }
    Ok(Prompt {
        text: ALIGN_TEMPLATE.replacen(SEMANTIC_SLOT, &format_key_primitives(semantics), 1),
        images: overlays.to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::semantic::RecordClass;

    fn overlays(n: usize) -> Vec<PathBuf> {
        (0..n).map(|i| PathBuf::from(format!("overlays/view_{i}.png"))).collect()
    }

    #[test]
    fn identify_prompt_is_the_template() {
        let p = build_identify_prompt(&overlays(8)).unwrap();
        assert_eq!(p.text, ANNOTATE_TEMPLATE);
        assert_eq!(p.images.len(), 8);
        assert_eq!(build_identify_prompt(&[]), Err(PromptError::NoImages));
    }

    #[test]
    fn alignment_slot_is_filled_once() {
        assert_eq!(ALIGN_TEMPLATE.matches(SEMANTIC_SLOT).count(), 1);
        let prims = vec![KeyPrimitive::new(RecordClass::Grasp, "Grasp Teapot", "handle")];
        let p = build_alignment_prompt(&prims, &overlays(2)).unwrap();
        assert!(!p.text.contains(SEMANTIC_SLOT));
        assert!(p.text.ends_with(
            "key_primitives = [\n    {Type: Grasp, Pos: [x, y, z], Orientation: [dx, dy, dz], Stage: \"Grasp Teapot\", Description: \"handle\"}\n]\n"
        ));
        assert_eq!(build_alignment_prompt(&[], &overlays(1)), Err(PromptError::EmptySemantics));
    }
}
