//! Procedural fixture objects rendered by sphere tracing signed distance
//! fields through the same orthographic cameras the pipeline uses.
//!
//! Each fixture is written as a complete object directory (eight views plus
//! top/bottom views, per-level segment masks) together with a scripted
//! aligner reply file so the whole pipeline can run offline.

use std::fs;
use std::io;
use std::path::Path;

use image::{Rgb, RgbImage};
use nalgebra::Rotation3;
use rayon::prelude::*;
use serde_json::json;

use crate::keypoints::centroid;
use crate::lifting::{Keypoint3D, OrthoCamera, Vec3};
use crate::mask::BinaryMask;
use crate::pipeline::geometry::{extract_object_keypoints, GeometryConfig};
use crate::segmentation::FileSegProvider;
use crate::semantic::{KeyPrimitive, RecordClass, SymAxis};
use crate::view::{
    canonical_pose, load_view_set, view_dir, write_depth_pgm, write_mask_png, DepthMap, MetaFile, PoseKind,
    VIEW_COUNT,
};
use crate::aligner::format_key_primitives;

pub const DEFAULT_SIZE: usize = 128;
pub const DEFAULT_SCALE: f64 = 0.02;
/// Surfaces within this angle of the viewing axis form the top/bottom masks.
pub const FACING_ANGLE_DEG: f64 = 40.0;

const MARCH_EXTENT: f64 = 2.5;
const HIT_EPS: f64 = 1e-5;
const MAX_STEPS: usize = 400;

#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    Box {
        center: Vec3,
        half: Vec3,
    },
    Cylinder {
        a: Vec3,
        b: Vec3,
        radius: f64,
    },
    Cone {
        a: Vec3,
        b: Vec3,
        ra: f64,
        rb: f64,
    },
    /// Torus around `center` in the plane normal to `normal`, clipped to the
    /// half-space `(p - center)·keep >= 0`.
    TorusArc {
        center: Vec3,
        normal: Vec3,
        major: f64,
        minor: f64,
        keep: Vec3,
    },
}

impl Shape {
    pub fn sdf(&self, p: &Vec3) -> f64 {
        match self {
            Shape::Box { center, half } => {
                let q = (p - center).abs() - half;
                let outside = q.map(|v| v.max(0.0)).norm();
                outside + q.max().min(0.0)
            }
            Shape::Cylinder { a, b, radius } => {
                let ba = b - a;
                let pa = p - a;
                let baba = ba.dot(&ba);
                let paba = pa.dot(&ba);
                let x = (pa * baba - ba * paba).norm() - radius * baba;
                let y = (paba - baba * 0.5).abs() - baba * 0.5;
                let (x2, y2) = (x * x, y * y * baba);
                let d = if x.max(y) < 0.0 {
                    -x2.min(y2)
                } else {
                    (if x > 0.0 { x2 } else { 0.0 }) + (if y > 0.0 { y2 } else { 0.0 })
                };
                d.signum() * d.abs().sqrt() / baba
            }
            Shape::Cone { a, b, ra, rb } => {
                let rba = rb - ra;
                let baba = (b - a).dot(&(b - a));
                let papa = (p - a).dot(&(p - a));
                let paba = (p - a).dot(&(b - a)) / baba;
                let x = (papa - paba * paba * baba).max(0.0).sqrt();
                let cax = (x - if paba < 0.5 { *ra } else { *rb }).max(0.0);
                let cay = (paba - 0.5).abs() - 0.5;
                let k = rba * rba + baba;
                let f = ((rba * (x - ra) + paba * baba) / k).clamp(0.0, 1.0);
                let cbx = x - ra - f * rba;
                let cby = paba - f;
                let s = if cbx < 0.0 && cay < 0.0 { -1.0 } else { 1.0 };
                s * (cax * cax + cay * cay * baba).min(cbx * cbx + cby * cby * baba).sqrt()
            }
            Shape::TorusArc {
                center,
                normal,
                major,
                minor,
                keep,
            } => {
                let q = p - center;
                let n = normal.normalize();
                let h = q.dot(&n);
                let radial = (q - n * h).norm();
                let torus = ((radial - major).powi(2) + h * h).sqrt() - minor;
                torus.max(-q.dot(&keep.normalize()))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Part {
    pub name: String,
    pub shape: Shape,
    pub color: [u8; 3],
}

/// How a ground-truth primitive's orientation is expressed in the scripted
/// alignment reply.
#[derive(Debug, Clone, PartialEq)]
pub enum TruthOrientation {
    Axis(SymAxis),
    /// Direction from the primitive's point toward this scene-local point.
    Toward(Vec3),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SemanticTruth {
    pub class: RecordClass,
    pub stage: String,
    pub description: String,
    /// Scene-local position.
    pub point: Vec3,
    pub orientation: TruthOrientation,
    /// Confidence of the first alignment reply; entries below the refine
    /// threshold get a confident second reply.
    pub initial_probability: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fixture {
    pub name: String,
    pub parts: Vec<Part>,
    pub rotation: Rotation3<f64>,
    pub translation: Vec3,
    /// `(use, stages)` plans reported by the identification reply.
    pub plans: Vec<(String, Vec<String>)>,
    pub semantics: Vec<SemanticTruth>,
}

/// A surface hit of one camera ray.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub depth: f64,
    pub part: usize,
    pub normal: Vec3,
}

impl Fixture {
    pub fn to_world(&self, local: &Vec3) -> Vec3 {
        self.rotation * local + self.translation
    }

    /// Signed distance and nearest part at a world point.
    pub fn sdf(&self, p: &Vec3) -> (f64, usize) {
        let q = self.rotation.inverse() * (p - self.translation);
        self.parts
            .iter()
            .enumerate()
            .map(|(i, part)| (part.shape.sdf(&q), i))
            .fold((f64::INFINITY, 0), |best, cur| if cur.0 < best.0 { cur } else { best })
    }

    fn normal(&self, p: &Vec3) -> Vec3 {
        let e = 1e-5;
        let d = |o: Vec3| self.sdf(&(p + o)).0 - self.sdf(&(p - o)).0;
        Vec3::new(d(Vec3::x() * e), d(Vec3::y() * e), d(Vec3::z() * e))
            .try_normalize(1e-12)
            .unwrap_or_else(Vec3::z)
    }

    /// Trace the ray through pixel `(px, py)`.
    pub fn trace(&self, cam: &OrthoCamera, px: f64, py: f64) -> Option<Hit> {
        let mut s = -MARCH_EXTENT;
        for _ in 0..MAX_STEPS {
            let p = cam.unproject(px, py, s);
            let (d, part) = self.sdf(&p);
            if d < HIT_EPS {
                return Some(Hit {
                    depth: s,
                    part,
                    normal: self.normal(&p),
                });
            }
            s += d.max(HIT_EPS);
            if s > MARCH_EXTENT {
                return None;
            }
        }
        None
    }

    pub fn render(&self, cam: &OrthoCamera, width: usize, height: usize) -> Render {
        let rows: Vec<Vec<Option<Hit>>> = (0..height)
            .into_par_iter()
            .map(|y| (0..width).map(|x| self.trace(cam, x as f64, y as f64)).collect())
            .collect();
        Render {
            width,
            height,
            hits: rows.into_iter().flatten().collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Render {
    pub width: usize,
    pub height: usize,
    pub hits: Vec<Option<Hit>>,
}

impl Render {
    fn hit(&self, x: usize, y: usize) -> Option<&Hit> {
        self.hits[y * self.width + x].as_ref()
    }

    pub fn mask(&self) -> BinaryMask {
        BinaryMask::from_fn(self.width, self.height, |x, y| self.hit(x, y).is_some())
    }

    pub fn part_mask(&self, part: usize) -> BinaryMask {
        BinaryMask::from_fn(self.width, self.height, |x, y| self.hit(x, y).is_some_and(|h| h.part == part))
    }

    /// Pixels whose surface faces the camera within `angle_deg`.
    pub fn facing_mask(&self, cam: &OrthoCamera, angle_deg: f64) -> BinaryMask {
        let cos = angle_deg.to_radians().cos();
        BinaryMask::from_fn(self.width, self.height, |x, y| {
            self.hit(x, y).is_some_and(|h| -h.normal.dot(&cam.forward) >= cos)
        })
    }

    pub fn depth(&self) -> DepthMap {
        DepthMap::from_fn(self.width, self.height, |x, y| self.hit(x, y).map(|h| h.depth))
    }

    /// Lambert-shaded colour image on a white background.
    pub fn shade(&self, cam: &OrthoCamera, parts: &[Part]) -> RgbImage {
        let light = (-cam.forward * 0.8 + cam.up * 0.5 + cam.right * 0.3).normalize();
        RgbImage::from_fn(self.width as u32, self.height as u32, |x, y| match self.hit(x as usize, y as usize) {
            None => Rgb([255, 255, 255]),
            Some(h) => {
                let k = 0.3 + 0.7 * h.normal.dot(&light).max(0.0);
                Rgb(parts[h.part].color.map(|c| (f64::from(c) * k).round().clamp(0.0, 255.0) as u8))
            }
        })
    }
}

/// Split a mask into two halves across its principal axis through the
/// centroid. Halves too small to keep are dropped.
fn split_halves(mask: &BinaryMask) -> Vec<BinaryMask> {
    let Ok(c) = centroid(mask) else {
        return Vec::new();
    };
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in mask.foreground() {
        let (dx, dy) = (x as f64 - c.x, y as f64 - c.y);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    let theta = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    let (ux, uy) = (theta.cos(), theta.sin());
    [true, false]
        .into_iter()
        .map(|side| {
            BinaryMask::from_fn(mask.width(), mask.height(), |x, y| {
                mask.get(x, y) && (((x as f64 - c.x) * ux + (y as f64 - c.y) * uy) >= 0.0) == side
            })
        })
        .filter(|m| m.area() >= MIN_SEGMENT_AREA)
        .collect()
}

const MIN_SEGMENT_AREA: usize = 4;

fn write_segments(dir: &Path, masks: &[BinaryMask]) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    for (i, m) in masks.iter().enumerate() {
        write_mask_png(&dir.join(format!("seg_{i:03}.png")), m).map_err(io::Error::other)?;
    }
    Ok(())
}

fn write_view_files(
    vdir: &Path,
    mask: &BinaryMask,
    depth: &DepthMap,
    rgb: Option<&RgbImage>,
    pose: (PoseKind, f64, f64),
    scale: f64,
) -> io::Result<()> {
    fs::create_dir_all(vdir)?;
    write_mask_png(&vdir.join("mask.png"), mask).map_err(io::Error::other)?;
    let (depth_min, depth_max) = write_depth_pgm(&vdir.join("depth.pgm"), depth).map_err(io::Error::other)?;
    if let Some(rgb) = rgb {
        rgb.save(vdir.join("rgb.png")).map_err(io::Error::other)?;
    }
    let meta = MetaFile {
        pose_kind: pose.0,
        azimuth: pose.1,
        elevation: pose.2,
        scale,
        depth_min,
        depth_max,
        origin: None,
        principal: None,
    };
    fs::write(vdir.join("meta.json"), serde_json::to_string_pretty(&meta)? + "\n")
}

fn camera_for(pose: (PoseKind, f64, f64), size: usize, scale: f64) -> OrthoCamera {
    let m = MetaFile {
        pose_kind: pose.0,
        azimuth: pose.1,
        elevation: pose.2,
        scale,
        depth_min: 0.0,
        depth_max: 0.0,
        origin: None,
        principal: None,
    };
    m.camera(size, size)
}

/// Render every view of `fixture` into `object_dir`.
pub fn write_object_views(fixture: &Fixture, object_dir: &Path, size: usize, scale: f64) -> io::Result<()> {
    for view_id in 0..VIEW_COUNT {
        let pose = canonical_pose(view_id);
        let cam = camera_for(pose, size, scale);
        let r = fixture.render(&cam, size, size);
        let vdir = view_dir(object_dir, view_id);
        let mask = r.mask();
        write_view_files(&vdir, &mask, &r.depth(), Some(&r.shade(&cam, &fixture.parts)), pose, scale)?;

        let parts: Vec<BinaryMask> = (0..fixture.parts.len())
            .map(|i| r.part_mask(i))
            .filter(|m| m.area() >= MIN_SEGMENT_AREA)
            .collect();
        let halves: Vec<BinaryMask> = parts.iter().flat_map(split_halves).collect();
        write_segments(&FileSegProvider::gamma_dir(object_dir, view_id, 1), &[mask])?;
        write_segments(&FileSegProvider::gamma_dir(object_dir, view_id, 2), &parts)?;
        write_segments(&FileSegProvider::gamma_dir(object_dir, view_id, 3), &halves)?;
    }
    for (name, pose) in [
        ("view_top", (PoseKind::Top, 0.0, 90.0)),
        ("view_bottom", (PoseKind::Bottom, 0.0, -90.0)),
    ] {
        let cam = camera_for(pose, size, scale);
        let r = fixture.render(&cam, size, size);
        let facing = r.facing_mask(&cam, FACING_ANGLE_DEG);
        let depth = r.depth();
        let depth = DepthMap::from_fn(size, size, |x, y| if facing.get(x, y) { depth.get(x, y) } else { None });
        write_view_files(&object_dir.join(name), &facing, &depth, None, pose, scale)?;
    }
    Ok(())
}

fn nearest(keypoints: &[Keypoint3D], p: &Vec3, exclude: Option<u32>) -> Option<u32> {
    keypoints
        .iter()
        .filter(|k| Some(k.index) != exclude)
        .min_by(|a, b| (a.pos - p).norm().total_cmp(&(b.pos - p).norm()).then(a.index.cmp(&b.index)))
        .map(|k| k.index)
}

fn identify_reply(fixture: &Fixture) -> String {
    let mut out = String::from("Analysis of the object and its uses.\n\n");
    for (usage, stages) in &fixture.plans {
        let quoted: Vec<String> = stages.iter().map(|s| format!("\"{s}\"")).collect();
        out.push_str(&format!("- \"{usage}\":\n    - {} stages: {}\n", stages.len(), quoted.join(", ")));
    }
    let prims: Vec<KeyPrimitive> = fixture
        .semantics
        .iter()
        .map(|s| KeyPrimitive::new(s.class, &s.stage, &s.description))
        .collect();
    out.push_str(&format!("\n```python\n{}\n```\n", format_key_primitives(&prims)));
    out
}

fn align_reply(fixture: &Fixture, keypoints: &[Keypoint3D], refined: bool) -> String {
    let mut blocks = serde_json::Map::new();
    for s in &fixture.semantics {
        let low = s.initial_probability < 0.5;
        if refined && !low {
            continue;
        }
        let prob = if refined { 0.9 } else { s.initial_probability };
        let world = fixture.to_world(&s.point);
        let pos = nearest(keypoints, &world, None);
        let ori = match &s.orientation {
            TruthOrientation::Axis(a) => json!(a.components()),
            TruthOrientation::Toward(q) => {
                let to = nearest(keypoints, &fixture.to_world(q), pos);
                json!([pos, to])
            }
        };
        let entry = json!({
            "Stage": s.stage,
            "pos_ID": pos,
            "pos_Probability": prob,
            "ori_ID": ori,
            "ori_Probability": 0.9,
            "Pos": "[x, y, z]",
            "Orientation": "[dx, dy, dz]",
            "Description": s.description,
        });
        blocks
            .entry(s.class.as_str())
            .or_insert_with(|| json!([]))
            .as_array_mut()
            .expect("class block is an array")
            .push(entry);
    }
    serde_json::to_string_pretty(&blocks).expect("JSON value") + "\n"
}

/// Scripted provider file: identify, align, and one refine reply for
/// entries that start below the confidence threshold.
pub fn mock_script(fixture: &Fixture, keypoints: &[Keypoint3D]) -> serde_json::Value {
    let id = &fixture.name;
    let mut script = json!({
        format!("{id}/identify"): [{"ok": identify_reply(fixture)}],
        format!("{id}/align"): [{"ok": align_reply(fixture, keypoints, false)}],
    });
    if fixture.semantics.iter().any(|s| s.initial_probability < 0.5) {
        script[format!("{id}/refine/1")] = json!([{"ok": align_reply(fixture, keypoints, true)}]);
    }
    script
}

/// Render fixtures under `root/<name>/` and write `root/mock_aligner.json`
/// with scripted replies for all of them.
pub fn write_dataset(fixtures: &[Fixture], root: &Path, size: usize, scale: f64, geometry: &GeometryConfig) -> io::Result<()> {
    let mut script = serde_json::Map::new();
    for f in fixtures {
        let dir = root.join(&f.name);
        write_object_views(f, &dir, size, scale)?;
        let set = load_view_set(&dir).map_err(io::Error::other)?;
        let geo = extract_object_keypoints(&set, geometry).map_err(io::Error::other)?;
        if let serde_json::Value::Object(m) = mock_script(f, &geo.keypoints) {
            script.extend(m);
        }
    }
    let sorted: std::collections::BTreeMap<_, _> = script.into_iter().collect();
    fs::write(root.join("mock_aligner.json"), serde_json::to_string_pretty(&sorted)? + "\n")
}

fn part(name: &str, shape: Shape, color: [u8; 3]) -> Part {
    Part {
        name: name.into(),
        shape,
        color,
    }
}

fn truth(
    class: RecordClass,
    stage: &str,
    description: &str,
    point: Vec3,
    orientation: TruthOrientation,
    initial_probability: f64,
) -> SemanticTruth {
    SemanticTruth {
        class,
        stage: stage.into(),
        description: description.into(),
        point,
        orientation,
        initial_probability,
    }
}

fn plan(usage: &str, stages: &[&str]) -> (String, Vec<String>) {
    (usage.into(), stages.iter().map(|s| s.to_string()).collect())
}

pub fn teapot() -> Fixture {
    let v = Vec3::new;
    Fixture {
        name: "teapot".into(),
        parts: vec![
            part(
                "body",
                Shape::Cone {
                    a: v(0.0, 0.0, -0.5),
                    b: v(0.0, 0.0, 0.2),
                    ra: 0.45,
                    rb: 0.36,
                },
                [200, 120, 80],
            ),
            part(
                "lid",
                Shape::Cone {
                    a: v(0.0, 0.0, 0.2),
                    b: v(0.0, 0.0, 0.34),
                    ra: 0.3,
                    rb: 0.1,
                },
                [180, 100, 70],
            ),
            part(
                "knob",
                Shape::Cylinder {
                    a: v(0.0, 0.0, 0.3),
                    b: v(0.0, 0.0, 0.44),
                    radius: 0.06,
                },
                [120, 70, 50],
            ),
            part(
                "spout",
                Shape::Cone {
                    a: v(-0.3, 0.0, -0.25),
                    b: v(-0.8, 0.0, 0.15),
                    ra: 0.12,
                    rb: 0.05,
                },
                [210, 140, 90],
            ),
            part(
                "handle",
                Shape::TorusArc {
                    center: v(0.38, 0.0, -0.15),
                    normal: Vec3::y(),
                    major: 0.24,
                    minor: 0.05,
                    keep: Vec3::x(),
                },
                [150, 90, 60],
            ),
        ],
        rotation: Rotation3::identity(),
        translation: Vec3::zeros(),
        plans: vec![
            plan(
                "pouring tea from teapot",
                &["Grasp Teapot", "Align Teapot with Cup Opening", "Pour Liquid"],
            ),
            plan("refilling the teapot", &["Open Lid"]),
        ],
        semantics: vec![
            truth(
                RecordClass::Main,
                "Pour Liquid",
                "Teapot body center and upright axis",
                v(0.0, 0.0, -0.15),
                TruthOrientation::Axis(SymAxis::PosZ),
                0.9,
            ),
            truth(
                RecordClass::Grasp,
                "Grasp Teapot",
                "Handle on the side opposite the spout",
                v(0.62, 0.0, -0.15),
                TruthOrientation::Axis(SymAxis::NegX),
                0.85,
            ),
            truth(
                RecordClass::Anchor,
                "Align Teapot with Cup Opening",
                "Spout tip to place over the cup",
                v(-0.8, 0.0, 0.15),
                TruthOrientation::Toward(v(-0.3, 0.0, -0.25)),
                0.4,
            ),
            truth(
                RecordClass::Hinge,
                "Open Lid",
                "Lid rim where the lid lifts off",
                v(0.3, 0.0, 0.2),
                TruthOrientation::Axis(SymAxis::PosY),
                0.8,
            ),
        ],
    }
}

pub fn mug() -> Fixture {
    let v = Vec3::new;
    Fixture {
        name: "mug".into(),
        parts: vec![
            part(
                "body",
                Shape::Cylinder {
                    a: v(0.0, 0.0, -0.45),
                    b: v(0.0, 0.0, 0.45),
                    radius: 0.38,
                },
                [70, 110, 190],
            ),
            part(
                "handle",
                Shape::TorusArc {
                    center: v(0.38, 0.0, 0.0),
                    normal: Vec3::y(),
                    major: 0.26,
                    minor: 0.06,
                    keep: Vec3::x(),
                },
                [50, 80, 150],
            ),
        ],
        rotation: Rotation3::identity(),
        translation: Vec3::zeros(),
        plans: vec![plan(
            "filling the mug from a dispenser",
            &["Grasp Mug", "Place Mug Under Dispenser"],
        )],
        semantics: vec![
            truth(
                RecordClass::Main,
                "Place Mug Under Dispenser",
                "Mug body center and upright axis",
                v(0.0, 0.0, 0.0),
                TruthOrientation::Axis(SymAxis::PosZ),
                0.9,
            ),
            truth(
                RecordClass::Grasp,
                "Grasp Mug",
                "Outer curve of the handle",
                v(0.64, 0.0, 0.0),
                TruthOrientation::Axis(SymAxis::NegX),
                0.8,
            ),
            truth(
                RecordClass::Anchor,
                "Place Mug Under Dispenser",
                "Rim opening that must sit under the nozzle",
                v(0.0, 0.0, 0.45),
                TruthOrientation::Axis(SymAxis::PosZ),
                0.75,
            ),
        ],
    }
}

pub fn button_box() -> Fixture {
    let v = Vec3::new;
    Fixture {
        name: "button_box".into(),
        parts: vec![
            part(
                "case",
                Shape::Box {
                    center: v(0.0, 0.0, -0.2),
                    half: v(0.6, 0.4, 0.25),
                },
                [110, 160, 110],
            ),
            part(
                "button",
                Shape::Cylinder {
                    a: v(0.25, 0.0, 0.0),
                    b: v(0.25, 0.0, 0.15),
                    radius: 0.13,
                },
                [210, 60, 60],
            ),
            part(
                "dial",
                Shape::Cylinder {
                    a: v(-0.3, 0.0, 0.0),
                    b: v(-0.3, 0.0, 0.1),
                    radius: 0.09,
                },
                [90, 90, 90],
            ),
        ],
        rotation: Rotation3::identity(),
        translation: Vec3::zeros(),
        plans: vec![plan("switching the device on", &["Hold Box", "Press Button"])],
        semantics: vec![
            truth(
                RecordClass::Main,
                "Press Button",
                "Case center and upright axis",
                v(0.0, 0.0, -0.2),
                TruthOrientation::Axis(SymAxis::PosZ),
                0.9,
            ),
            truth(
                RecordClass::Grasp,
                "Hold Box",
                "Side edge of the case",
                v(0.6, 0.0, 0.05),
                TruthOrientation::Axis(SymAxis::NegX),
                0.7,
            ),
            truth(
                RecordClass::Anchor,
                "Hold Box",
                "Bottom face resting on the table",
                v(0.0, 0.0, -0.45),
                TruthOrientation::Axis(SymAxis::NegZ),
                0.7,
            ),
            truth(
                RecordClass::Actuation,
                "Press Button",
                "Top of the button",
                v(0.25, 0.0, 0.15),
                TruthOrientation::Axis(SymAxis::NegZ),
                0.85,
            ),
        ],
    }
}

/// Upright cylinder tilted about world X by `tilt_deg`.
pub fn tilted_cylinder(tilt_deg: f64) -> Fixture {
    Fixture {
        name: "tilted_cylinder".into(),
        parts: vec![part(
            "body",
            Shape::Cylinder {
                a: Vec3::new(0.0, 0.0, -0.5),
                b: Vec3::new(0.0, 0.0, 0.5),
                radius: 0.3,
            },
            [160, 160, 200],
        )],
        rotation: Rotation3::from_axis_angle(&Vec3::x_axis(), tilt_deg.to_radians()),
        translation: Vec3::zeros(),
        plans: vec![plan("rolling the cylinder", &["Hold Cylinder"])],
        semantics: vec![truth(
            RecordClass::Main,
            "Hold Cylinder",
            "Cylinder center and axis",
            Vec3::zeros(),
            TruthOrientation::Axis(SymAxis::PosZ),
            0.9,
        )],
    }
}

/// The default demonstration set.
pub fn standard_fixtures() -> Vec<Fixture> {
    vec![teapot(), mug(), button_box()]
}

pub fn fixture_by_name(name: &str) -> Option<Fixture> {
    match name {
        "teapot" => Some(teapot()),
        "mug" => Some(mug()),
        "button_box" => Some(button_box()),
        "tilted_cylinder" => Some(tilted_cylinder(30.0)),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn primitive_sdfs_at_known_points() {
        let b = Shape::Box {
            center: Vec3::zeros(),
            half: Vec3::new(1.0, 2.0, 3.0),
        };
        assert_relative_eq!(b.sdf(&Vec3::new(2.0, 0.0, 0.0)), 1.0, epsilon = 1e-12);
        assert_relative_eq!(b.sdf(&Vec3::zeros()), -1.0, epsilon = 1e-12);
        let c = Shape::Cylinder {
            a: Vec3::zeros(),
            b: Vec3::z(),
            radius: 0.5,
        };
        assert_relative_eq!(c.sdf(&Vec3::new(1.0, 0.0, 0.5)), 0.5, epsilon = 1e-12);
        assert_relative_eq!(c.sdf(&Vec3::new(0.0, 0.0, 2.0)), 1.0, epsilon = 1e-12);
        let k = Shape::Cone {
            a: Vec3::zeros(),
            b: Vec3::z(),
            ra: 0.5,
            rb: 0.5,
        };
        assert_relative_eq!(k.sdf(&Vec3::new(1.0, 0.0, 0.5)), 0.5, epsilon = 1e-12);
        let t = Shape::TorusArc {
            center: Vec3::zeros(),
            normal: Vec3::z(),
            major: 1.0,
            minor: 0.1,
            keep: Vec3::x(),
        };
        assert_relative_eq!(t.sdf(&Vec3::new(1.0, 0.0, 0.0)), -0.1, epsilon = 1e-12);
        assert!(t.sdf(&Vec3::new(-1.0, 0.0, 0.0)) > 0.5);
    }

    #[test]
    fn traced_depth_matches_box_face() {
        let f = Fixture {
            name: "box".into(),
            parts: vec![part(
                "b",
                Shape::Box {
                    center: Vec3::zeros(),
                    half: Vec3::new(0.5, 0.5, 0.5),
                },
                [0, 0, 0],
            )],
            rotation: Rotation3::identity(),
            translation: Vec3::zeros(),
            plans: vec![],
            semantics: vec![],
        };
        // looking along -X from +X: the near face is x = 0.5
        let cam = camera_for(canonical_pose(0), 64, 0.02);
        let hit = f.trace(&cam, 32.0, 32.0).unwrap();
        let p = cam.unproject(32.0, 32.0, hit.depth);
        assert_relative_eq!(p.x, 0.5, epsilon = 1e-4);
        assert!(hit.normal.x > 0.99);
        assert!(f.trace(&cam, 0.0, 0.0).is_none());
    }

    #[test]
    fn halves_partition_the_mask() {
        let m = BinaryMask::from_fn(40, 20, |x, y| (5..35).contains(&x) && (5..15).contains(&y));
        let h = split_halves(&m);
        assert_eq!(h.len(), 2);
        assert_eq!(h[0].area() + h[1].area(), m.area());
        // split across the long axis: each half is on one side in x
        assert!(h[0].foreground().all(|(x, _)| x >= 20) || h[0].foreground().all(|(x, _)| x < 20));
    }
}
