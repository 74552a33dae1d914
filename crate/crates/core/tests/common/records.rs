//! Random annotation records for round-trip testing.

#![allow(dead_code)]

use rand::seq::IndexedRandom;
use rand::Rng;

use pasg_core::lifting::{CalibrationStatus, PrincipalFrame, Vec3};
use pasg_core::keypoints::KeypointSource;
use pasg_core::semantic::{
    AnnotatedKeypoint, AnnotationRecord, Correspondence, CorrespondenceSet, FrameInfo, OriId, PosId, RecordClass,
    SymAxis, Vec3Field,
};

const WORDS: &[&str] = &["Grasp", "lid", "Open Lid", "spout \"tip\"", "ß→✓", "a\\b", "tab\there", "", "Pour", "x"];

fn text(rng: &mut impl Rng) -> String {
    (0..rng.random_range(1..4)).map(|_| *WORDS.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
}

fn coord(rng: &mut impl Rng) -> f64 {
    match rng.random_range(0..4) {
        0 => 0.0,
        1 => rng.random_range(-1e3..1e3),
        2 => rng.random_range(-1.0..1.0) * 10f64.powi(rng.random_range(-300..300)),
        _ => (rng.random_range(-1_000_000i64..1_000_000) as f64) / 1e6,
    }
}

fn vec3(rng: &mut impl Rng) -> [f64; 3] {
    [coord(rng), coord(rng), coord(rng)]
}

fn probability(rng: &mut impl Rng) -> Option<f64> {
    match rng.random_range(0..4) {
        0 => None,
        1 => Some(*[0.0, 1.0, 0.5].choose(rng).unwrap()),
        _ => Some(rng.random_range(0.0..=1.0)),
    }
}

pub fn random_entry(rng: &mut impl Rng) -> Correspondence {
    let pos_id = match rng.random_range(0..5) {
        0 => PosId::None,
        1 => PosId::Error,
        _ => PosId::Index(rng.random_range(0..500)),
    };
    let ori_id = match rng.random_range(0..6) {
        0 => OriId::None,
        1 => OriId::Error,
        2 | 3 => OriId::Axis(*SymAxis::ALL.choose(rng).unwrap()),
        _ => OriId::PointPair(rng.random_range(0..500), rng.random_range(0..500)),
    };
    Correspondence {
        class: *RecordClass::ALL.choose(rng).unwrap(),
        stage: text(rng),
        pos_id,
        pos_probability: probability(rng),
        ori_id,
        ori_probability: probability(rng),
        pos: if rng.random_bool(0.5) { Vec3Field::PosPlaceholder } else { Vec3Field::Value(vec3(rng)) },
        orientation: if rng.random_bool(0.5) { Vec3Field::DirPlaceholder } else { Vec3Field::Value(vec3(rng)) },
        description: text(rng),
    }
}

pub fn random_set(rng: &mut impl Rng) -> CorrespondenceSet {
    CorrespondenceSet::new((0..rng.random_range(0..12)).map(|_| random_entry(rng)).collect())
}

pub fn random_record(rng: &mut impl Rng) -> AnnotationRecord {
    let n = rng.random_range(0..20);
    let sources = [
        KeypointSource::Centroid,
        KeypointSource::PolygonCorner,
        KeypointSource::CurvatureCorner,
        KeypointSource::PcaBoundary,
    ];
    let keypoints = (1..=n)
        .map(|i| AnnotatedKeypoint {
            index: i,
            pos: vec3(rng),
            source: *sources.choose(rng).unwrap(),
            views: {
                let mut v: Vec<usize> = (0..8).filter(|_| rng.random_bool(0.4)).collect();
                v.dedup();
                v
            },
        })
        .collect();
    let frame = PrincipalFrame {
        origin: Vec3::from(vec3(rng)),
        ..PrincipalFrame::default()
    };
    let calibration = match rng.random_range(0..4) {
        0 => None,
        1 => Some(CalibrationStatus::DegenerateAxis),
        2 => Some(CalibrationStatus::Kept {
            deviation_deg: rng.random_range(0.0..10.0),
        }),
        _ => Some(CalibrationStatus::Rebuilt {
            deviation_deg: rng.random_range(10.0..180.0),
        }),
    };
    AnnotationRecord {
        object_id: text(rng),
        frame: FrameInfo::new(&frame, calibration),
        keypoints,
        correspondences: random_set(rng),
    }
}

/// A well-formed record for question generation: every keypoint is seen in
/// at least one view and every entry references an existing keypoint.
pub fn bench_record(rng: &mut impl Rng, object_id: &str) -> AnnotationRecord {
    let n_kp = rng.random_range(8..30u32);
    let keypoints = (1..=n_kp)
        .map(|i| AnnotatedKeypoint {
            index: i,
            pos: vec3(rng),
            source: KeypointSource::PolygonCorner,
            views: {
                let mut v: Vec<usize> = (0..8).filter(|_| rng.random_bool(0.5)).collect();
                if v.is_empty() {
                    v.push(rng.random_range(0..8));
                }
                v
            },
        })
        .collect();
    let stages: Vec<String> = (0..rng.random_range(3..7)).map(|s| format!("{object_id} stage {s}")).collect();
    let entries = (0..rng.random_range(4..12))
        .map(|e| Correspondence {
            class: *RecordClass::ALL.choose(rng).unwrap(),
            stage: stages.choose(rng).unwrap().clone(),
            pos_id: PosId::Index(rng.random_range(1..=n_kp)),
            pos_probability: Some(0.9),
            ori_id: OriId::Axis(*SymAxis::ALL.choose(rng).unwrap()),
            ori_probability: Some(0.9),
            pos: Vec3Field::PosPlaceholder,
            orientation: Vec3Field::DirPlaceholder,
            description: format!("primitive {e}"),
        })
        .collect();
    AnnotationRecord {
        object_id: object_id.to_string(),
        frame: FrameInfo::new(&PrincipalFrame::default(), None),
        keypoints,
        correspondences: CorrespondenceSet::new(entries),
    }
}

pub fn bench_records(rng: &mut impl Rng, n: usize) -> Vec<AnnotationRecord> {
    (0..n).map(|i| bench_record(rng, &format!("obj{i:03}"))).collect()
}
