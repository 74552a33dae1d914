//! Interaction-primitive taxonomy, task decomposition and correspondence
//! records.

mod correspondence;
pub mod json;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use correspondence::{
    validate_correspondences, Correspondence, CorrespondenceSet, EntryIssue, EntryKey, OriId, PosId,
    ValidationReport, Vec3Field,
};
pub use json::{parse_annotation, serialize_annotation, AnnotatedKeypoint, AnnotationRecord, FrameInfo, SemanticError};

/// Record-level primitive classes, in canonical serialization order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RecordClass {
    Main,
    Anchor,
    Grasp,
    Actuation,
    Hinge,
}

impl RecordClass {
    pub const ALL: [RecordClass; 5] = [
        RecordClass::Main,
        RecordClass::Anchor,
        RecordClass::Grasp,
        RecordClass::Actuation,
        RecordClass::Hinge,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RecordClass::Main => "Main",
            RecordClass::Anchor => "Anchor",
            RecordClass::Grasp => "Grasp",
            RecordClass::Actuation => "Actuation",
            RecordClass::Hinge => "Hinge",
        }
    }

    /// The (point, axis) pair a record of this class binds.
    pub fn taxonomy(self) -> (PointKind, AxisKind) {
        match self {
            RecordClass::Main => (PointKind::Center, AxisKind::Primary),
            RecordClass::Anchor => (PointKind::Anchor, AxisKind::Functional),
            RecordClass::Grasp => (PointKind::Grasp, AxisKind::Approach),
            RecordClass::Actuation => (PointKind::Actuation, AxisKind::Approach),
            RecordClass::Hinge => (PointKind::Actuation, AxisKind::Functional),
        }
    }
}

impl fmt::Display for RecordClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RecordClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RecordClass::ALL
            .into_iter()
            .find(|c| c.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown primitive class `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointKind {
    /// Object reference point (body center).
    Center,
    Anchor,
    Grasp,
    Actuation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AxisKind {
    Primary,
    Functional,
    Approach,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PrimitiveKind {
    Point(PointKind),
    Axis(AxisKind),
}

/// One of the six signed principal directions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SymAxis {
    PosX,
    NegX,
    PosY,
    NegY,
    PosZ,
    NegZ,
}

impl SymAxis {
    pub const ALL: [SymAxis; 6] = [
        SymAxis::PosX,
        SymAxis::NegX,
        SymAxis::PosY,
        SymAxis::NegY,
        SymAxis::PosZ,
        SymAxis::NegZ,
    ];

    pub fn components(self) -> [i64; 3] {
        match self {
            SymAxis::PosX => [1, 0, 0],
            SymAxis::NegX => [-1, 0, 0],
            SymAxis::PosY => [0, 1, 0],
            SymAxis::NegY => [0, -1, 0],
            SymAxis::PosZ => [0, 0, 1],
            SymAxis::NegZ => [0, 0, -1],
        }
    }

    pub fn from_components(c: [i64; 3]) -> Option<Self> {
        SymAxis::ALL.into_iter().find(|a| a.components() == c)
    }

    /// `(axis index, sign)`.
    pub fn axis_sign(self) -> (usize, f64) {
        let c = self.components();
        let k = c.iter().position(|v| *v != 0).expect("unit axis");
        (k, c[k] as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GeometricRef {
    Point(u32),
    PointPair(u32, u32),
    Axis(SymAxis),
}

/// An (entity, structure, function) triplet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionPrimitive {
    pub kind: PrimitiveKind,
    pub entity: GeometricRef,
    pub structure: String,
    pub function: String,
}

impl InteractionPrimitive {
    /// Point classes need a point, axis classes a direction.
    pub fn is_well_formed(&self) -> bool {
        matches!(
            (&self.kind, &self.entity),
            (PrimitiveKind::Point(_), GeometricRef::Point(_))
                | (PrimitiveKind::Axis(_), GeometricRef::PointPair(..) | GeometricRef::Axis(_))
        )
    }
}

/// A semantic primitive declared by the identification step, before it is
/// bound to geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyPrimitive {
    pub class: RecordClass,
    pub stage: String,
    pub description: String,
    pub pos: Vec3Field,
    pub orientation: Vec3Field,
}

impl KeyPrimitive {
    pub fn new(class: RecordClass, stage: &str, description: &str) -> Self {
        Self {
            class,
            stage: stage.to_string(),
            description: description.to_string(),
            pos: Vec3Field::PosPlaceholder,
            orientation: Vec3Field::DirPlaceholder,
        }
    }

    pub fn key(&self) -> EntryKey {
        EntryKey::new(self.class, &self.stage, &self.description)
    }
}

/// A labelled point or axis primitive referenced by a subgoal constraint.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PrimitiveRef<K> {
    pub kind: K,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrimitiveConstraint {
    pub points: Vec<PrimitiveRef<PointKind>>,
    pub axes: Vec<PrimitiveRef<AxisKind>>,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subgoal {
    pub goal_id: String,
    pub stage_name: String,
    pub constraint: PrimitiveConstraint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub task_id: String,
    pub description: String,
    pub subgoals: Vec<Subgoal>,
}

impl TaskSpec {
    pub fn is_well_formed(&self) -> bool {
        !self.subgoals.is_empty()
            && self.subgoals.iter().all(|g| {
                !g.stage_name.trim().is_empty()
                    && !(g.constraint.points.is_empty() && g.constraint.axes.is_empty())
            })
    }
}

/// Union of all constrained primitives with the `(task, subgoal)` positions
/// that contribute each one.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct UnifiedPrimitiveSet {
    pub points: Vec<PrimitiveRef<PointKind>>,
    pub axes: Vec<PrimitiveRef<AxisKind>>,
    pub point_provenance: Vec<Vec<(usize, usize)>>,
    pub axis_provenance: Vec<Vec<(usize, usize)>>,
}

fn union_into<K: Clone + Eq + std::hash::Hash>(
    members: &mut Vec<PrimitiveRef<K>>,
    provenance: &mut Vec<Vec<(usize, usize)>>,
    seen: &mut HashMap<PrimitiveRef<K>, usize>,
    item: &PrimitiveRef<K>,
    at: (usize, usize),
) {
    let slot = *seen.entry(item.clone()).or_insert_with(|| {
        members.push(item.clone());
        provenance.push(Vec::new());
        members.len() - 1
    });
    if !provenance[slot].contains(&at) {
        provenance[slot].push(at);
    }
}

/// Set union of every subgoal's point and axis primitives, ordered by first
/// appearance.
pub fn unify_primitives(tasks: &[TaskSpec]) -> UnifiedPrimitiveSet {
    let mut out = UnifiedPrimitiveSet::default();
    let mut seen_points = HashMap::new();
    let mut seen_axes = HashMap::new();
    for (i, task) in tasks.iter().enumerate() {
        for (j, goal) in task.subgoals.iter().enumerate() {
            for p in &goal.constraint.points {
                union_into(&mut out.points, &mut out.point_provenance, &mut seen_points, p, (i, j));
            }
            for a in &goal.constraint.axes {
                union_into(&mut out.axes, &mut out.axis_provenance, &mut seen_axes, a, (i, j));
            }
        }
    }
    out
}

/// Group declared primitives into tasks.
///
/// Each `(use, stages)` plan becomes a task whose subgoals are the stages
/// that have at least one primitive (matched case-insensitively). Primitives
/// whose stage appears in no plan are collected into one trailing task with
/// a subgoal per stage.
pub fn build_task_specs(plans: &[(String, Vec<String>)], primitives: &[KeyPrimitive]) -> Vec<TaskSpec> {
    let norm = |s: &str| s.trim().to_lowercase();
    let constraint_for = |stage: &str| {
        let members: Vec<&KeyPrimitive> = primitives.iter().filter(|p| norm(&p.stage) == norm(stage)).collect();
        let mut c = PrimitiveConstraint {
            points: Vec::new(),
            axes: Vec::new(),
            description: stage.trim().to_string(),
        };
        for p in members {
            let (pk, ak) = p.class.taxonomy();
            let point = PrimitiveRef {
                kind: pk,
                label: p.description.clone(),
            };
            let axis = PrimitiveRef {
                kind: ak,
                label: p.description.clone(),
            };
            if !c.points.contains(&point) {
                c.points.push(point);
            }
            if !c.axes.contains(&axis) {
                c.axes.push(axis);
            }
        }
        c
    };
    let make_task = |n: usize, description: &str, stages: &[String]| {
        let subgoals: Vec<Subgoal> = stages
            .iter()
            .filter_map(|s| {
                let c = constraint_for(s);
                (!c.points.is_empty()).then_some((s, c))
            })
            .enumerate()
            .map(|(j, (s, c))| Subgoal {
                goal_id: format!("t{n}.g{}", j + 1),
                stage_name: s.trim().to_string(),
                constraint: c,
            })
            .collect();
        TaskSpec {
            task_id: format!("t{n}"),
            description: description.to_string(),
            subgoals,
        }
    };

    let mut tasks = Vec::new();
    for (use_name, stages) in plans {
        let task = make_task(tasks.len() + 1, use_name, stages);
        if !task.subgoals.is_empty() {
            tasks.push(task);
        }
    }
    let planned: Vec<String> = plans.iter().flat_map(|(_, s)| s.iter().map(|x| norm(x))).collect();
    let mut leftover: Vec<String> = Vec::new();
    for p in primitives {
        if !planned.contains(&norm(&p.stage)) && !leftover.iter().any(|s| norm(s) == norm(&p.stage)) {
            leftover.push(p.stage.clone());
        }
    }
    if !leftover.is_empty() {
        tasks.push(make_task(tasks.len() + 1, "unplanned stages", &leftover));
    }
    tasks
}
