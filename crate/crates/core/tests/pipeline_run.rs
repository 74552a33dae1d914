use std::fs;
use std::path::Path;
use std::sync::Arc;

use pasg_core::aligner::ScriptedProvider;
use pasg_core::pipeline::geometry::GeometryConfig;
use pasg_core::pipeline::run::{resume_run, start_run, HaltPoint, ObjectStatus, RunManifest, RunOptions};
use pasg_core::pipeline::{annotation_path, PipelineConfig, Providers, RetrySettings, GEOMETRY_FILE};
use pasg_core::segmentation::{FileSegProvider, SegProvider};
use pasg_core::semantic::{parse_annotation, RecordClass};
use pasg_core::synth::{self, DEFAULT_SCALE, DEFAULT_SIZE};

fn providers(input: &Path) -> Providers {
    let script = fs::read_to_string(input.join("mock_aligner.json")).unwrap();
    Providers {
        vlm: Arc::new(ScriptedProvider::from_json(&script).unwrap()),
        seg: Arc::new(|dir: &Path| Box::new(FileSegProvider::new(dir)) as Box<dyn SegProvider>),
    }
}

fn config() -> PipelineConfig {
    PipelineConfig {
        retry: RetrySettings {
            base_delay_ms: 0,
            ..RetrySettings::default()
        },
        ..PipelineConfig::default()
    }
}

fn dataset(root: &Path, fixtures: Vec<synth::Fixture>) {
    synth::write_dataset(&fixtures, root, DEFAULT_SIZE, DEFAULT_SCALE, &GeometryConfig::default()).unwrap();
}

#[test]
fn teapot_run_is_refined_and_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("input");
    dataset(&input, vec![synth::teapot()]);

    let a = start_run(&input, &tmp.path().join("runs/a"), &config(), &providers(&input), RunOptions::default()).unwrap();
    assert!(a.all_refined(), "{:?}", a.manifest.objects);
    let b = start_run(&input, &tmp.path().join("runs/b"), &config(), &providers(&input), RunOptions::default()).unwrap();
    assert!(b.all_refined());

    let fa = fs::read(annotation_path(&a.run_dir.join("teapot"), "teapot")).unwrap();
    let fb = fs::read(annotation_path(&b.run_dir.join("teapot"), "teapot")).unwrap();
    assert_eq!(fa, fb);
    let rec = parse_annotation(&fa).unwrap();
    for class in [RecordClass::Grasp, RecordClass::Anchor] {
        assert!(rec.correspondences.of_class(class).count() >= 1, "no {class} entry");
    }
    let indices = rec.keypoint_indices();
    for c in rec.correspondences.entries() {
        assert!(c.referenced_indices().iter().all(|i| indices.contains(i)));
    }
    for v in 0..8 {
        let p = format!("teapot/overlays/view_{v}.png");
        assert_eq!(fs::read(a.run_dir.join(&p)).unwrap(), fs::read(b.run_dir.join(&p)).unwrap());
    }
    // the low-confidence anchor forced one refinement round
    let trace = fs::read_to_string(a.run_dir.join("teapot/teapot.refine-trace.jsonl")).unwrap();
    assert!(trace.lines().any(|l| l.contains("\"resample\"")));
}

#[test]
fn halt_then_resume_skips_extraction() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("input");
    dataset(&input, vec![synth::mug()]);
    let run = tmp.path().join("runs/r");
    let opts = RunOptions {
        halt_after: Some(HaltPoint::Extracted),
    };
    let s = start_run(&input, &run, &config(), &providers(&input), opts).unwrap();
    assert_eq!(s.manifest.status("mug"), Some(&ObjectStatus::Extracted));
    let geo_before = fs::metadata(run.join("mug").join(GEOMETRY_FILE)).unwrap().modified().unwrap();
    let t_before = s.manifest.objects["mug"].timings["extracted"];

    let s = resume_run(&run, &providers(&input), RunOptions::default()).unwrap();
    assert!(s.all_refined());
    assert_eq!(s.manifest.objects["mug"].timings["extracted"], t_before);
    let geo_after = fs::metadata(run.join("mug").join(GEOMETRY_FILE)).unwrap().modified().unwrap();
    assert_eq!(geo_before, geo_after);

    // completed run: resume is a no-op
    let again = resume_run(&run, &providers(&input), RunOptions::default()).unwrap();
    assert_eq!(again.manifest, s.manifest);
}

#[test]
fn missing_artifact_demotes_object() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("input");
    dataset(&input, vec![synth::mug()]);
    let run = tmp.path().join("runs/r");
    let opts = RunOptions {
        halt_after: Some(HaltPoint::Aligned),
    };
    start_run(&input, &run, &config(), &providers(&input), opts).unwrap();
    fs::remove_file(run.join("mug").join(GEOMETRY_FILE)).unwrap();
    // the scripted replies for identify/align were consumed; a fresh provider replays them
    let s = resume_run(&run, &providers(&input), RunOptions::default()).unwrap();
    assert!(s.all_refined(), "{:?}", s.manifest.objects);
    assert!(s.manifest.objects["mug"].timings.contains_key("extracted"));
}

#[test]
fn empty_object_fails_alone() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("input");
    dataset(&input, vec![synth::mug()]);
    // copy the mug and blank every mask of the copy
    let bad = input.join("blank");
    copy_dir(&input.join("mug"), &bad);
    for v in 0..8 {
        let m = pasg_core::mask::BinaryMask::empty(DEFAULT_SIZE, DEFAULT_SIZE);
        pasg_core::view::write_mask_png(&bad.join(format!("view_{v}/mask.png")), &m).unwrap();
    }
    let s = start_run(&input, &tmp.path().join("runs/r"), &config(), &providers(&input), RunOptions::default()).unwrap();
    assert_eq!(s.manifest.status("mug"), Some(&ObjectStatus::Refined));
    match s.manifest.status("blank") {
        Some(ObjectStatus::Failed { reason }) => assert!(reason.starts_with("EmptyMask"), "{reason}"),
        other => panic!("unexpected {other:?}"),
    }
    let m = RunManifest::load(&s.run_dir).unwrap();
    assert_eq!(m, s.manifest);
}

fn copy_dir(from: &Path, to: &Path) {
    fs::create_dir_all(to).unwrap();
    for e in fs::read_dir(from).unwrap() {
        let e = e.unwrap();
        let dst = to.join(e.file_name());
        if e.path().is_dir() {
            copy_dir(&e.path(), &dst);
        } else {
            fs::copy(e.path(), dst).unwrap();
        }
    }
}
