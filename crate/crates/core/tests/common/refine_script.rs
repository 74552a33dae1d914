//! Scripted refinement backend and hand-derived loop traces.

#![allow(dead_code)]

use std::collections::BTreeMap;

use pasg_core::refine::{BackendError, RefineBackend, RefineConfig};
use pasg_core::segmentation::GranularityLevel;
use pasg_core::semantic::{
    Correspondence, CorrespondenceSet, KeyPrimitive, OriId, PosId, RecordClass, SymAxis, Vec3Field,
};

pub fn entry(class: RecordClass, desc: &str, p: f64) -> Correspondence {
    Correspondence {
        class,
        stage: "Use".into(),
        pos_id: PosId::Index(1),
        pos_probability: Some(p),
        ori_id: OriId::Axis(SymAxis::PosZ),
        ori_probability: Some(0.9),
        pos: Vec3Field::PosPlaceholder,
        orientation: Vec3Field::DirPlaceholder,
        description: desc.into(),
    }
}

pub fn prims(n: usize) -> Vec<KeyPrimitive> {
    (0..n).map(|i| KeyPrimitive::new(RecordClass::Grasp, "Use", &format!("p{i}"))).collect()
}

pub fn levels(n: u32) -> Vec<GranularityLevel> {
    (1..=n).map(|o| GranularityLevel::new(o, "")).collect()
}

pub fn config(n_levels: u32) -> RefineConfig {
    RefineConfig {
        tau_max: 5,
        low_conf_threshold: 0.5,
        granularity_levels: levels(n_levels),
    }
}

/// Replies with `answers[t][description]` for each target and records calls.
#[derive(Default)]
pub struct Scripted {
    pub answers: BTreeMap<u32, BTreeMap<String, f64>>,
    pub fail_at: Option<u32>,
    pub resampled: Vec<(u32, u32)>,
    pub aligned: Vec<(u32, Vec<String>)>,
}

impl RefineBackend for Scripted {
    fn resample(&mut self, t: u32, gamma: &GranularityLevel) -> Result<usize, BackendError> {
        self.resampled.push((t, gamma.ordinal));
        Ok(10 * gamma.ordinal as usize)
    }

    fn align(&mut self, t: u32, _: &GranularityLevel, targets: &[KeyPrimitive]) -> Result<CorrespondenceSet, BackendError> {
        if self.fail_at == Some(t) {
            return Err(BackendError("Unavailable after 4 attempts".into()));
        }
        self.aligned.push((t, targets.iter().map(|p| p.description.clone()).collect()));
        let answers = self.answers.get(&t).cloned().unwrap_or_default();
        Ok(CorrespondenceSet::new(
            targets
                .iter()
                .filter_map(|p| answers.get(&p.description).map(|&q| entry(p.class, &p.description, q)))
                .collect(),
        ))
    }
}

/// Two primitives; `p0` starts low and is answered with high confidence at
/// iteration `k - 1`, so the loop succeeds at `t = k`.
pub fn succeed_at(k: u32) -> (Vec<KeyPrimitive>, CorrespondenceSet, Scripted) {
    let initial = CorrespondenceSet::new(vec![
        entry(RecordClass::Grasp, "p0", if k == 1 { 0.9 } else { 0.2 }),
        entry(RecordClass::Grasp, "p1", 0.95),
    ]);
    let mut s = Scripted::default();
    for t in 1..k {
        let p = if t + 1 == k { 0.9 } else { 0.3 };
        s.answers.insert(t, BTreeMap::from([("p0".to_string(), p)]));
    }
    (prims(2), initial, s)
}

/// `(iteration, gamma ordinal, action)` of one full refinement round at `t`:
/// check at the current level, then advance one level and re-query.
fn round(t: u32) -> Vec<(u32, u32, &'static str)> {
    vec![(t, t, "match"), (t, t + 1, "resample"), (t, t + 1, "align"), (t, t + 1, "replace")]
}

pub fn trace_success_at(k: u32) -> Vec<(u32, u32, &'static str)> {
    let mut out: Vec<_> = (1..k).flat_map(round).collect();
    out.extend([(k, k, "match"), (k, k, "success")]);
    out
}

/// Budget runs out at iteration `t` (either guard).
pub fn trace_exhausted_at(t: u32) -> Vec<(u32, u32, &'static str)> {
    let mut out: Vec<_> = (1..t).flat_map(round).collect();
    out.extend([(t, t, "match"), (t, t, "failure")]);
    out
}

/// Alignment call fails during round `t`.
pub fn trace_provider_error_at(t: u32) -> Vec<(u32, u32, &'static str)> {
    let mut out: Vec<_> = (1..t).flat_map(round).collect();
    out.extend([(t, t, "match"), (t, t + 1, "resample"), (t, t + 1, "failure")]);
    out
}
