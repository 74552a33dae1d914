//! Confidence-gated self-refinement: re-segment at finer granularity and
//! re-align only the primitives that failed, until every primitive passes or
//! the iteration/granularity budget runs out.

use std::collections::HashSet;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::segmentation::GranularityLevel;
use crate::semantic::{CorrespondenceSet, EntryKey, KeyPrimitive};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefineConfig {
    pub tau_max: u32,
    pub low_conf_threshold: f64,
    pub granularity_levels: Vec<GranularityLevel>,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            tau_max: 5,
            low_conf_threshold: 0.5,
            granularity_levels: GranularityLevel::default_levels(),
        }
    }
}

impl RefineConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.tau_max < 1 {
            return Err("tau_max must be >= 1".into());
        }
        if !(self.low_conf_threshold > 0.0 && self.low_conf_threshold < 1.0) {
            return Err("low_conf_threshold must lie in (0, 1)".into());
        }
        if self.granularity_levels.is_empty() {
            return Err("at least one granularity level is required".into());
        }
        if self.granularity_levels.windows(2).any(|w| w[0].ordinal >= w[1].ordinal) {
            return Err("granularity ordinals must be strictly increasing".into());
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("{0}")]
pub struct BackendError(pub String);

/// The geometry and alignment steps the loop drives.
pub trait RefineBackend {
    /// Recompute keypoints at `gamma`; returns the keypoint count.
    fn resample(&mut self, t: u32, gamma: &GranularityLevel) -> Result<usize, BackendError>;
    /// Align `targets` against the current keypoints.
    fn align(&mut self, t: u32, gamma: &GranularityLevel, targets: &[KeyPrimitive]) -> Result<CorrespondenceSet, BackendError>;
}

/// Entries needing another pass: indices of failing entries plus declared
/// primitives that have no entry at all.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LowSet {
    pub entries: Vec<usize>,
    pub missing: Vec<EntryKey>,
}

impl LowSet {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty() && self.missing.is_empty()
    }

    /// Distinct keys covered, failing entries first, in order.
    pub fn keys(&self, corrs: &CorrespondenceSet) -> Vec<EntryKey> {
        let mut out: Vec<EntryKey> = Vec::new();
        for k in self.entries.iter().map(|&i| corrs.entries()[i].key()).chain(self.missing.iter().cloned()) {
            if !out.contains(&k) {
                out.push(k);
            }
        }
        out
    }
}

/// Indices of entries with a probability below `threshold` (strictly) or an
/// unmatched id.
pub fn find_low_confidence(corrs: &CorrespondenceSet, threshold: f64) -> Vec<usize> {
    corrs
        .entries()
        .iter()
        .enumerate()
        .filter(|(_, c)| !c.passes(threshold))
        .map(|(i, _)| i)
        .collect()
}

fn low_set(corrs: &CorrespondenceSet, primitives: &[KeyPrimitive], threshold: f64) -> LowSet {
    let present: HashSet<EntryKey> = corrs.entries().iter().map(|c| c.key()).collect();
    let mut missing = Vec::new();
    for p in primitives {
        let k = p.key();
        if !present.contains(&k) && !missing.contains(&k) {
            missing.push(k);
        }
    }
    LowSet {
        entries: find_low_confidence(corrs, threshold),
        missing,
    }
}

/// Swap the entries of `low` for refreshed entries with the same key. Keys
/// with no refreshed entry keep their old entries; refreshed entries for
/// keys outside `low` are ignored.
pub fn replace_low_conf(old: &CorrespondenceSet, refreshed: &CorrespondenceSet, low: &LowSet) -> CorrespondenceSet {
    let targeted: HashSet<EntryKey> = low.keys(old).into_iter().collect();
    let answered: HashSet<EntryKey> = refreshed
        .entries()
        .iter()
        .map(|c| c.key())
        .filter(|k| targeted.contains(k))
        .collect();
    let low_idx: HashSet<usize> = low.entries.iter().copied().collect();
    let kept = old
        .entries()
        .iter()
        .enumerate()
        .filter(|(i, c)| !(low_idx.contains(i) && answered.contains(&c.key())))
        .map(|(_, c)| c.clone());
    let added = refreshed.entries().iter().filter(|c| answered.contains(&c.key())).cloned();
    kept.chain(added).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Guard {
    TauMax,
    GammaMax,
    Both,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "detail")]
pub enum FailureCause {
    /// Budget exhausted with primitives still failing.
    Exhausted(Guard),
    Provider(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub iteration: u32,
    pub gamma: u32,
    pub action: String,
    pub entry_ids: Vec<String>,
    pub outcome: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub guard: Option<Guard>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RefineStatus {
    Success,
    Failure(FailureCause),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefineOutcome {
    pub status: RefineStatus,
    /// Latest correspondence set (refined on success).
    pub correspondences: CorrespondenceSet,
    pub iterations: u32,
    /// Index into the configured levels at exit.
    pub gamma_index: usize,
    pub remaining: Vec<EntryKey>,
    pub trace: Vec<TraceEvent>,
}

impl RefineOutcome {
    pub fn succeeded(&self) -> bool {
        self.status == RefineStatus::Success
    }

    pub fn write_trace(&self, path: &Path) -> std::io::Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        for e in &self.trace {
            writeln!(out, "{}", serde_json::to_string(e).expect("trace event serializes"))?;
        }
        out.flush()
    }
}

/// Run the refinement loop from an initial alignment `corrs` of the declared
/// `primitives`.
pub fn run_self_refine(
    primitives: &[KeyPrimitive],
    corrs: CorrespondenceSet,
    backend: &mut dyn RefineBackend,
    cfg: &RefineConfig,
) -> RefineOutcome {
    let levels = &cfg.granularity_levels;
    let mut gamma = 0usize;
    let mut t = 0u32;
    let mut current = corrs;
    let mut trace = Vec::new();
    let ids = |keys: &[EntryKey]| keys.iter().map(ToString::to_string).collect::<Vec<_>>();
    let event = |trace: &mut Vec<TraceEvent>, t: u32, g: usize, action: &str, entries: Vec<String>, outcome: String, guard| {
        trace.push(TraceEvent {
            iteration: t,
            gamma: levels[g].ordinal,
            action: action.to_string(),
            entry_ids: entries,
            outcome,
            guard,
        })
    };

    let mut remaining = Vec::new();
    while t < cfg.tau_max {
        t += 1;
        let low = low_set(&current, primitives, cfg.low_conf_threshold);
        let keys = low.keys(&current);
        event(&mut trace, t, gamma, "match", ids(&keys), format!("{} low", keys.len()), None);
        if low.is_empty() {
            event(&mut trace, t, gamma, "success", vec![], "all primitives passed".into(), None);
            return RefineOutcome {
                status: RefineStatus::Success,
                correspondences: current,
                iterations: t,
                gamma_index: gamma,
                remaining: vec![],
                trace,
            };
        }
        let guard = match (t == cfg.tau_max, gamma + 1 == levels.len()) {
            (true, true) => Some(Guard::Both),
            (true, false) => Some(Guard::TauMax),
            (false, true) => Some(Guard::GammaMax),
            (false, false) => None,
        };
        if let Some(g) = guard {
            event(&mut trace, t, gamma, "failure", ids(&keys), "budget exhausted".into(), Some(g));
            return RefineOutcome {
                status: RefineStatus::Failure(FailureCause::Exhausted(g)),
                correspondences: current,
                iterations: t,
                gamma_index: gamma,
                remaining: keys,
                trace,
            };
        }
        gamma += 1;
        let level = &levels[gamma];
        let step = backend.resample(t, level).and_then(|n| {
            event(&mut trace, t, gamma, "resample", vec![], format!("{n} keypoints"), None);
            let targets: Vec<KeyPrimitive> = keys
                .iter()
                .map(|k| {
                    primitives
                        .iter()
                        .find(|p| p.key() == *k)
                        .cloned()
                        .unwrap_or_else(|| KeyPrimitive::new(k.class, &k.stage, &k.description))
                })
                .collect();
            backend.align(t, level, &targets)
        });
        match step {
            Ok(refreshed) => {
                event(&mut trace, t, gamma, "align", ids(&keys), format!("{} entries", refreshed.len()), None);
                current = replace_low_conf(&current, &refreshed, &low);
                event(&mut trace, t, gamma, "replace", ids(&keys), format!("{} entries", current.len()), None);
            }
            Err(e) => {
                event(&mut trace, t, gamma, "failure", ids(&keys), format!("provider error: {e}"), None);
                return RefineOutcome {
                    status: RefineStatus::Failure(FailureCause::Provider(e.0)),
                    correspondences: current,
                    iterations: t,
                    gamma_index: gamma,
                    remaining: keys,
                    trace,
                };
            }
        }
        remaining = keys;
    }
    event(&mut trace, t, gamma, "failure", ids(&remaining), "loop exit".into(), Some(Guard::TauMax));
    RefineOutcome {
        status: RefineStatus::Failure(FailureCause::Exhausted(Guard::TauMax)),
        correspondences: current,
        iterations: t,
        gamma_index: gamma,
        remaining,
        trace,
    }
}
