mod common;

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::oracles::{self, jittered};
use pasg_core::lifting::{
    calibrate_principal_frame, lift_keypoint, merge_cross_view, merge_with_pinned, project_to_view, CalibrationStatus,
    PrincipalFrame, Vec3,
};
use pasg_core::pipeline::geometry::{keypoints_for_mask, GeometryConfig};
use pasg_core::synth::{self, Fixture, DEFAULT_SCALE, DEFAULT_SIZE};
use pasg_core::view::{load_view_set, ViewSet};

fn rendered(fixture: &Fixture) -> (tempfile::TempDir, ViewSet) {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join(&fixture.name);
    synth::write_object_views(fixture, &dir, DEFAULT_SIZE, DEFAULT_SCALE).unwrap();
    let set = load_view_set(&dir).unwrap();
    (tmp, set)
}

/// Lifting then projecting returns to the detection, and the lifted point
/// lies on the rendered surface.
fn check_round_trip(fixture: &Fixture) {
    let (_tmp, set) = rendered(fixture);
    let cfg = GeometryConfig::default();
    let mut worst_px: f64 = 0.0;
    let mut worst_sdf: f64 = 0.0;
    let mut lifted = 0;
    for view in &set.views {
        let cam = &view.meta.camera;
        for kp in keypoints_for_mask(&view.mask, view.meta.view_id, &cfg).unwrap() {
            let Ok(world) = lift_keypoint(&kp, &view.depth, cam) else { continue };
            let (px, py) = project_to_view(&world, cam);
            worst_px = worst_px.max((px - kp.pos.x).hypot(py - kp.pos.y));
            worst_sdf = worst_sdf.max(fixture.sdf(&world).0.abs());
            lifted += 1;
        }
    }
    assert!(lifted >= 8 * 3, "{}: only {lifted} keypoints lifted", fixture.name);
    assert!(worst_px <= 0.5, "{}: reprojection error {worst_px} px", fixture.name);
    // within one pixel footprint of the true surface
    assert!(worst_sdf <= DEFAULT_SCALE, "{}: off-surface by {worst_sdf}", fixture.name);
}

#[test]
fn box_round_trip() {
    check_round_trip(&synth::button_box());
}

#[test]
fn cylinder_round_trip() {
    check_round_trip(&synth::tilted_cylinder(0.0));
}

#[test]
fn tilted_cylinder_axis_recovered() {
    let fixture = synth::tilted_cylinder(30.0);
    let (_tmp, set) = rendered(&fixture);
    let cal = calibrate_principal_frame(
        set.top.as_ref().unwrap(),
        set.bottom.as_ref().unwrap(),
        &PrincipalFrame::default(),
        10.0,
    )
    .unwrap();
    assert!(cal.deviated(), "{:?}", cal.status);
    let truth = fixture.rotation * Vec3::z();
    let err = cal.frame.z_axis.dot(&truth).clamp(-1.0, 1.0).acos().to_degrees();
    assert!(err <= 1.0, "axis off by {err} degrees");
    assert!(cal.frame.orthonormality_error() < 1e-9);
}

#[test]
fn upright_cylinder_keeps_frame() {
    let (_tmp, set) = rendered(&synth::tilted_cylinder(0.0));
    let default = PrincipalFrame::default();
    let cal = calibrate_principal_frame(set.top.as_ref().unwrap(), set.bottom.as_ref().unwrap(), &default, 10.0).unwrap();
    assert!(matches!(cal.status, CalibrationStatus::Kept { .. }), "{:?}", cal.status);
    assert_eq!(cal.frame, default);
}

#[test]
fn merge_matches_single_linkage() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..50 {
        let lifted = jittered(&mut rng);
        let radius = rng.random_range(0.01..0.08);
        let merged = merge_cross_view(&lifted, radius);
        let ours: BTreeSet<BTreeSet<usize>> = merged
            .iter()
            .map(|k| k.support.iter().map(|s| s.pos.x as usize).collect())
            .collect();
        let worlds: Vec<Vec3> = lifted.iter().map(|l| l.world).collect();
        assert_eq!(ours, oracles::single_linkage(&worlds, radius));

        let indices: Vec<u32> = merged.iter().map(|k| k.index).collect();
        assert_eq!(indices, (1..=merged.len() as u32).collect::<Vec<_>>());
        for k in &merged {
            let mean = k.support.iter().map(|s| worlds[s.pos.x as usize]).sum::<Vec3>() / k.support.len() as f64;
            assert!((mean - k.pos).norm() < 1e-12);
        }
        // first members (by view, then order) are increasing with the index
        let firsts: Vec<(usize, usize)> = merged
            .iter()
            .map(|k| k.support.iter().map(|s| (s.view_id, s.pos.x as usize)).min().unwrap())
            .collect();
        assert!(firsts.windows(2).all(|w| w[0] < w[1]));
    }
}

#[test]
fn pinned_merge_keeps_indices() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..30 {
        let first = jittered(&mut rng);
        let pinned = merge_cross_view(&first, 0.05);
        let more = jittered(&mut rng);
        let merged = merge_with_pinned(&pinned, &more, 0.05);
        let before: BTreeMap<u32, Vec3> = pinned.iter().map(|k| (k.index, k.pos)).collect();
        for k in &merged {
            if let Some(p) = before.get(&k.index) {
                assert_eq!(*p, k.pos);
            }
        }
        assert!(before.keys().all(|i| merged.iter().any(|k| k.index == *i)));
        let support: usize = merged.iter().map(|k| k.support.len()).sum();
        assert_eq!(support, first.len() + more.len());
        let mut idx: Vec<u32> = merged.iter().map(|k| k.index).collect();
        idx.dedup();
        assert_eq!(idx.len(), merged.len());
    }
}
