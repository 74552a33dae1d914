mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::records;
use pasg_core::benchgen::{
    evaluate, generate_all, generate_questions, load_records, split_dataset, write_jsonl, Category, EvalError,
    SkipReason, SplitError, VqaItem, OPTION_COUNT,
};
use pasg_core::semantic::{
    AnnotatedKeypoint, AnnotationRecord, Correspondence, CorrespondenceSet, FrameInfo, OriId, PosId, RecordClass,
    SymAxis, Vec3Field,
};
use pasg_core::keypoints::KeypointSource;
use pasg_core::lifting::PrincipalFrame;

fn fixture_dir(sub: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(sub)
}

fn item(id: usize, object: &str, category: Category) -> VqaItem {
    VqaItem {
        item_id: format!("{object}-{id:05}"),
        object_id: object.into(),
        category,
        question: "q".into(),
        image: "i.png".into(),
        marked: vec![1],
        options: vec!["a".into(), "b".into(), "c".into(), "d".into()],
        answer_index: id % OPTION_COUNT,
    }
}

fn single_entry_record(class: RecordClass, stage: &str) -> AnnotationRecord {
    AnnotationRecord {
        object_id: "solo".into(),
        frame: FrameInfo::new(&PrincipalFrame::default(), None),
        keypoints: vec![AnnotatedKeypoint {
            index: 1,
            pos: [0.0; 3],
            source: KeypointSource::Centroid,
            views: vec![2, 5],
        }],
        correspondences: CorrespondenceSet::new(vec![Correspondence {
            class,
            stage: stage.into(),
            pos_id: PosId::Index(1),
            pos_probability: Some(0.9),
            ori_id: OriId::Axis(SymAxis::PosZ),
            ori_probability: Some(0.9),
            pos: Vec3Field::PosPlaceholder,
            orientation: Vec3Field::DirPlaceholder,
            description: "d".into(),
        }]),
    }
}

#[test]
fn single_grasp_gives_one_type_question() {
    let g = generate_questions(&[single_entry_record(RecordClass::Grasp, "Pick")], Category::TypeIdentification, 3);
    assert_eq!(g.items.len(), 1);
    let it = &g.items[0];
    assert_eq!(it.options[it.answer_index], "Grasp");
    assert_eq!(it.options.len(), OPTION_COUNT);
    assert_eq!(it.options.iter().collect::<BTreeSet<_>>().len(), OPTION_COUNT);
    assert_eq!(it.image, "solo/overlays/view_2.png");
}

#[test]
fn lone_stage_lacks_distractors() {
    let g = generate_questions(&[single_entry_record(RecordClass::Grasp, "Pick")], Category::TaskAssociation, 3);
    assert!(g.items.is_empty());
    assert_eq!(g.skipped.len(), 1);
    assert_eq!(g.skipped[0].reason, SkipReason::InsufficientDistractors);
}

#[test]
fn fixture_items_match_golden() {
    let recs = load_records(&fixture_dir("bench")).unwrap();
    assert_eq!(recs.len(), 3);
    let g = generate_all(&recs, 2024);
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("items.jsonl");
    write_jsonl(&out, &g.items).unwrap();
    let golden = fixture_dir("golden/bench_items.jsonl");
    if std::env::var_os("PASG_BLESS").is_some() {
        std::fs::copy(&out, &golden).unwrap();
    }
    assert_eq!(std::fs::read(&out).unwrap(), std::fs::read(&golden).unwrap());
    assert_eq!(generate_all(&recs, 2024), g);
}

#[test]
fn items_are_well_formed() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let recs = records::bench_records(&mut rng, 80);
    let g = generate_all(&recs, 9);
    assert!(g.items.len() >= 1000, "{} items", g.items.len());
    let ids: BTreeSet<&str> = g.items.iter().map(|i| i.item_id.as_str()).collect();
    assert_eq!(ids.len(), g.items.len());
    for it in &g.items {
        assert_eq!(it.options.len(), OPTION_COUNT);
        assert_eq!(it.options.iter().collect::<BTreeSet<_>>().len(), OPTION_COUNT, "{}", it.item_id);
        let rec = recs.iter().find(|r| r.object_id == it.object_id).unwrap();
        let view: usize = it.image.rsplit("view_").next().unwrap().trim_end_matches(".png").parse().unwrap();
        for m in &it.marked {
            assert!(rec.keypoint(*m).unwrap().views.contains(&view), "{} marks hidden {m}", it.item_id);
        }
    }
}

#[test]
fn answer_positions_balanced() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let g = generate_all(&records::bench_records(&mut rng, 80), 5);
    let n = g.items.len();
    assert!(n >= 1000);
    let mut counts = [0usize; OPTION_COUNT];
    for it in &g.items {
        counts[it.answer_index] += 1;
    }
    for c in counts {
        let f = c as f64 / n as f64;
        assert!((f - 0.25).abs() <= 0.05, "{counts:?}");
    }
}

#[test]
fn split_matches_published_ratio() {
    let pool: Vec<VqaItem> = (0..6979).map(|i| item(i, &format!("o{}", i % 97), Category::TaskAssociation)).collect();
    let s = split_dataset(&pool, 0.8, &BTreeSet::new(), 1).unwrap();
    assert_eq!(s.train.len(), 5583);
    assert_eq!(s.test_in.len(), 1396);
}

#[test]
fn split_ten_items() {
    let pool: Vec<VqaItem> = (0..10).map(|i| item(i, "a", Category::TypeIdentification)).collect();
    let s = split_dataset(&pool, 0.8, &BTreeSet::new(), 1).unwrap();
    assert_eq!((s.train.len(), s.test_in.len(), s.test_ood.len()), (8, 2, 0));
}

#[test]
fn split_stratified_and_disjoint() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let pool: Vec<VqaItem> = (0..1000)
        .map(|i| item(i, &format!("o{}", rng.random_range(0..40)), Category::ALL[rng.random_range(0..3)]))
        .collect();
    let ood: BTreeSet<String> = (0..5).map(|k| format!("o{k}")).collect();
    let s = split_dataset(&pool, 0.8, &ood, 77).unwrap();
    for cat in Category::ALL {
        let n_c = pool.iter().filter(|i| i.category == cat && !ood.contains(&i.object_id)).count();
        let train_c = s.train.iter().filter(|i| i.category == cat).count();
        let test_c = s.test_in.iter().filter(|i| i.category == cat).count();
        assert_eq!(train_c, (0.8 * n_c as f64).floor() as usize);
        assert_eq!(train_c + test_c, n_c);
    }
    let seen: BTreeSet<&str> = s.train.iter().chain(&s.test_in).map(|i| i.object_id.as_str()).collect();
    assert!(s.test_ood.iter().all(|i| ood.contains(&i.object_id) && !seen.contains(i.object_id.as_str())));
    let all: BTreeSet<&str> = s.train.iter().chain(&s.test_in).chain(&s.test_ood).map(|i| i.item_id.as_str()).collect();
    assert_eq!(all.len(), pool.len());
    assert_eq!(split_dataset(&pool, 0.8, &ood, 77).unwrap(), s);
}

#[test]
fn split_degenerate_cases() {
    assert_eq!(split_dataset(&[], 0.8, &BTreeSet::new(), 1), Err(SplitError::EmptyPool));
    let pool: Vec<VqaItem> = (0..4).map(|i| item(i, "a", Category::TaskToPrimitive)).collect();
    let s = split_dataset(&pool, 0.8, &BTreeSet::from(["a".to_string()]), 1).unwrap();
    assert!(s.train.is_empty() && s.test_in.is_empty());
    assert_eq!(s.test_ood.len(), 4);
    assert_eq!(s.warnings.len(), 1);
}

#[test]
fn random_guessing_near_chance() {
    let mut rng = ChaCha8Rng::seed_from_u64(34);
    let pool: Vec<VqaItem> = (0..1000).map(|i| item(i, "o", Category::ALL[i % 3])).collect();
    let preds: BTreeMap<String, usize> =
        pool.iter().map(|i| (i.item_id.clone(), rng.random_range(0..OPTION_COUNT))).collect();
    let r = evaluate(&pool, &preds).unwrap();
    assert!((r.overall.accuracy.unwrap() - 0.25).abs() <= 0.04, "{:?}", r.overall);
}

#[test]
fn evaluation_edges() {
    let pool: Vec<VqaItem> = (0..6).map(|i| item(i, "o", Category::ALL[i % 2])).collect();
    let all: BTreeMap<String, usize> = pool.iter().map(|i| (i.item_id.clone(), i.answer_index)).collect();
    let r = evaluate(&pool, &all).unwrap();
    assert_eq!(r.overall.accuracy, Some(1.0));
    assert_eq!(r.task3.accuracy, None);
    assert_eq!(r.averaging, "micro");

    let mut partial = all.clone();
    partial.remove(&pool[0].item_id);
    let r = evaluate(&pool, &partial).unwrap();
    assert_eq!((r.missing, r.overall.correct, r.overall.total), (1, 5, 6));

    let mut bogus = all;
    bogus.insert("nope".into(), 0);
    assert_eq!(evaluate(&pool, &bogus), Err(EvalError::UnknownItemId("nope".into())));
}
