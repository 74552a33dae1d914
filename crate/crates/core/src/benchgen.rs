//! Single-choice VQA items generated from annotation records, train/test
//! splits with held-out objects, and accuracy scoring.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::semantic::{parse_annotation, AnnotationRecord, PosId, RecordClass};

pub const OPTION_COUNT: usize = 4;
pub const DEFAULT_TRAIN_FRAC: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    TypeIdentification,
    TaskAssociation,
    TaskToPrimitive,
}

impl Category {
    pub const ALL: [Category; 3] = [
        Category::TypeIdentification,
        Category::TaskAssociation,
        Category::TaskToPrimitive,
    ];

    fn id_tag(self) -> &'static str {
        match self {
            Category::TypeIdentification => "type",
            Category::TaskAssociation => "task",
            Category::TaskToPrimitive => "prim",
        }
    }

    /// Report key.
    pub fn task_key(self) -> &'static str {
        match self {
            Category::TypeIdentification => "task1",
            Category::TaskAssociation => "task2",
            Category::TaskToPrimitive => "task3",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VqaItem {
    pub item_id: String,
    pub object_id: String,
    pub category: Category,
    pub question: String,
    /// Overlay image, relative to the run directory.
    pub image: String,
    /// Keypoint indices marked in the image that the question is about.
    pub marked: Vec<u32>,
    pub options: Vec<String>,
    pub answer_index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipReason {
    NotVisible,
    InsufficientDistractors,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Skipped {
    pub item_id: String,
    pub reason: SkipReason,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Generation {
    pub items: Vec<VqaItem>,
    pub skipped: Vec<Skipped>,
}

impl Generation {
    fn extend(&mut self, other: Generation) {
        self.items.extend(other.items);
        self.skipped.extend(other.skipped);
    }

    fn sort(&mut self) {
        self.items.sort_by(|a, b| a.item_id.cmp(&b.item_id));
        self.skipped.sort_by(|a, b| a.item_id.cmp(&b.item_id));
    }
}

/// Per-item generator seeded from the run seed and the item id, so an item
/// does not depend on which other items were generated.
pub fn item_rng(seed: u64, key: &str) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(key.as_bytes());
    ChaCha8Rng::from_seed(h.finalize().into())
}

/// First view in which keypoint `index` was detected.
fn visible_view(rec: &AnnotationRecord, index: u32) -> Option<usize> {
    rec.keypoint(index).and_then(|k| k.views.iter().min().copied())
}

fn image_ref(object_id: &str, view: usize) -> String {
    format!("{object_id}/overlays/view_{view}.png")
}

/// Shuffle the correct option in among the distractors.
fn assemble(
    rng: &mut ChaCha8Rng,
    base: ItemBase,
    correct: String,
    distractors: Vec<String>,
) -> VqaItem {
    let mut options = distractors;
    options.push(correct.clone());
    options.shuffle(rng);
    let answer_index = options.iter().position(|o| *o == correct).expect("correct option present");
    VqaItem {
        item_id: base.item_id,
        object_id: base.object_id,
        category: base.category,
        question: base.question,
        image: base.image,
        marked: base.marked,
        options,
        answer_index,
    }
}

struct ItemBase {
    item_id: String,
    object_id: String,
    category: Category,
    question: String,
    image: String,
    marked: Vec<u32>,
}

fn sample_distinct(rng: &mut ChaCha8Rng, pool: &[String], n: usize) -> Vec<String> {
    pool.choose_multiple(rng, n).cloned().collect()
}

fn stages_of(rec: &AnnotationRecord) -> BTreeSet<String> {
    rec.correspondences.entries().iter().map(|c| c.stage.clone()).collect()
}

fn stages_using(rec: &AnnotationRecord, index: u32) -> BTreeSet<String> {
    rec.correspondences
        .entries()
        .iter()
        .filter(|c| c.pos_id == PosId::Index(index))
        .map(|c| c.stage.clone())
        .collect()
}

/// Generate the items of one category.
pub fn generate_questions(records: &[AnnotationRecord], category: Category, seed: u64) -> Generation {
    let mut out = Generation::default();
    let all_stages: BTreeMap<&str, BTreeSet<String>> =
        records.iter().map(|r| (r.object_id.as_str(), stages_of(r))).collect();
    for rec in records {
        let mut n = 0usize;
        let mut next_id = || {
            n += 1;
            format!("{}-{}-{:04}", rec.object_id, category.id_tag(), n)
        };
        match category {
            Category::TypeIdentification => {
                for c in rec.correspondences.entries() {
                    let item_id = next_id();
                    let Some((index, view)) = c.pos_id.index().and_then(|i| visible_view(rec, i).map(|v| (i, v))) else {
                        out.skipped.push(Skipped {
                            item_id,
                            reason: SkipReason::NotVisible,
                        });
                        continue;
                    };
                    let mut rng = item_rng(seed, &item_id);
                    let others: Vec<String> = RecordClass::ALL
                        .iter()
                        .filter(|k| **k != c.class)
                        .map(|k| k.as_str().to_string())
                        .collect();
                    let distractors = sample_distinct(&mut rng, &others, OPTION_COUNT - 1);
                    let base = ItemBase {
                        item_id,
                        object_id: rec.object_id.clone(),
                        category,
                        question: format!(
                            "What functional type is the primitive marked {index} on this {}?",
                            rec.object_id
                        ),
                        image: image_ref(&rec.object_id, view),
                        marked: vec![index],
                    };
                    out.items.push(assemble(&mut rng, base, c.class.as_str().to_string(), distractors));
                }
            }
            Category::TaskAssociation => {
                let indices: BTreeSet<u32> = rec.correspondences.entries().iter().filter_map(|c| c.pos_id.index()).collect();
                for index in indices {
                    let item_id = next_id();
                    let Some(view) = visible_view(rec, index) else {
                        out.skipped.push(Skipped {
                            item_id,
                            reason: SkipReason::NotVisible,
                        });
                        continue;
                    };
                    let using = stages_using(rec, index);
                    let mut rng = item_rng(seed, &item_id);
                    let correct = using.iter().next().cloned().expect("index comes from an entry");
                    let local: Vec<String> = stages_of(rec).difference(&using).cloned().collect();
                    let mut distractors = sample_distinct(&mut rng, &local, OPTION_COUNT - 1);
                    if distractors.len() < OPTION_COUNT - 1 {
                        let foreign: Vec<String> = all_stages
                            .iter()
                            .filter(|(id, _)| **id != rec.object_id)
                            .flat_map(|(_, s)| s.iter().cloned())
                            .filter(|s| !using.contains(s) && !local.contains(s))
                            .collect::<BTreeSet<_>>()
                            .into_iter()
                            .collect();
                        let need = OPTION_COUNT - 1 - distractors.len();
                        distractors.extend(sample_distinct(&mut rng, &foreign, need));
                    }
                    if distractors.len() < OPTION_COUNT - 1 {
                        out.skipped.push(Skipped {
                            item_id,
                            reason: SkipReason::InsufficientDistractors,
                        });
                        continue;
                    }
                    let base = ItemBase {
                        item_id,
                        object_id: rec.object_id.clone(),
                        category,
                        question: format!("Which task stage uses the primitive marked {index}?"),
                        image: image_ref(&rec.object_id, view),
                        marked: vec![index],
                    };
                    out.items.push(assemble(&mut rng, base, correct, distractors));
                }
            }
            Category::TaskToPrimitive => {
                for stage in stages_of(rec) {
                    let item_id = next_id();
                    let referenced: BTreeSet<u32> = rec
                        .correspondences
                        .entries()
                        .iter()
                        .filter(|c| c.stage == stage)
                        .filter_map(|c| c.pos_id.index())
                        .collect();
                    let Some((index, view)) = referenced.iter().find_map(|i| visible_view(rec, *i).map(|v| (*i, v)))
                    else {
                        out.skipped.push(Skipped {
                            item_id,
                            reason: SkipReason::NotVisible,
                        });
                        continue;
                    };
                    let pool: Vec<u32> = rec
                        .keypoints
                        .iter()
                        .filter(|k| k.views.contains(&view) && !referenced.contains(&k.index))
                        .map(|k| k.index)
                        .collect();
                    if pool.len() < OPTION_COUNT - 1 {
                        out.skipped.push(Skipped {
                            item_id,
                            reason: SkipReason::InsufficientDistractors,
                        });
                        continue;
                    }
                    let mut rng = item_rng(seed, &item_id);
                    let picked: Vec<u32> = pool.choose_multiple(&mut rng, OPTION_COUNT - 1).copied().collect();
                    let mut marked: Vec<u32> = picked.iter().copied().chain([index]).collect();
                    marked.sort_unstable();
                    let base = ItemBase {
                        item_id,
                        object_id: rec.object_id.clone(),
                        category,
                        question: format!("Which marked primitive is needed for the stage \"{stage}\"?"),
                        image: image_ref(&rec.object_id, view),
                        marked,
                    };
                    let label = |i: u32| format!("keypoint {i}");
                    out.items.push(assemble(&mut rng, base, label(index), picked.into_iter().map(label).collect()));
                }
            }
        }
    }
    out.sort();
    out
}

/// Items of every category, ordered by item id.
pub fn generate_all(records: &[AnnotationRecord], seed: u64) -> Generation {
    let mut out = Generation::default();
    for c in Category::ALL {
        out.extend(generate_questions(records, c, seed));
    }
    out.sort();
    out
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<VqaItem>,
    pub test_in: Vec<VqaItem>,
    pub test_ood: Vec<VqaItem>,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SplitError {
    #[error("no items to split")]
    EmptyPool,
}

/// Held-out objects go to `test_ood`; the rest is shuffled and split per
/// category, `floor(train_frac · n)` items to train.
pub fn split_dataset(
    items: &[VqaItem],
    train_frac: f64,
    ood_objects: &BTreeSet<String>,
    seed: u64,
) -> Result<DatasetSplit, SplitError> {
    if items.is_empty() {
        return Err(SplitError::EmptyPool);
    }
    let mut split = DatasetSplit {
        seed,
        ..DatasetSplit::default()
    };
    let mut by_cat: BTreeMap<Category, Vec<VqaItem>> = BTreeMap::new();
    for it in items {
        if ood_objects.contains(&it.object_id) {
            split.test_ood.push(it.clone());
        } else {
            by_cat.entry(it.category).or_default().push(it.clone());
        }
    }
    if by_cat.is_empty() {
        split.warnings.push("every item belongs to a held-out object; train and test_in are empty".into());
    }
    for (cat, mut pool) in by_cat {
        pool.sort_by(|a, b| a.item_id.cmp(&b.item_id));
        pool.shuffle(&mut item_rng(seed, &format!("split/{}", cat.id_tag())));
        let n_train = (train_frac * pool.len() as f64).floor() as usize;
        let test = pool.split_off(n_train);
        split.train.extend(pool);
        split.test_in.extend(test);
    }
    for part in [&mut split.train, &mut split.test_in, &mut split.test_ood] {
        part.sort_by(|a, b| a.item_id.cmp(&b.item_id));
    }
    Ok(split)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub correct: usize,
    pub total: usize,
    /// `correct / total`; absent when there are no items.
    pub accuracy: Option<f64>,
}

impl Score {
    fn new(correct: usize, total: usize) -> Self {
        Self {
            correct,
            total,
            accuracy: (total > 0).then(|| correct as f64 / total as f64),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task1: Score,
    pub task2: Score,
    pub task3: Score,
    /// Item-weighted over all categories.
    pub overall: Score,
    pub averaging: String,
    /// Items without a prediction; scored as wrong.
    pub missing: usize,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EvalError {
    #[error("prediction for unknown item {0}")]
    UnknownItemId(String),
}

pub fn evaluate(items: &[VqaItem], predictions: &BTreeMap<String, usize>) -> Result<EvalReport, EvalError> {
    let ids: BTreeSet<&str> = items.iter().map(|i| i.item_id.as_str()).collect();
    if let Some(unknown) = predictions.keys().find(|k| !ids.contains(k.as_str())) {
        return Err(EvalError::UnknownItemId(unknown.clone()));
    }
    let mut per: BTreeMap<Category, (usize, usize)> = BTreeMap::new();
    let mut missing = 0;
    for it in items {
        let e = per.entry(it.category).or_default();
        e.1 += 1;
        match predictions.get(&it.item_id) {
            Some(p) if *p == it.answer_index => e.0 += 1,
            Some(_) => {}
            None => missing += 1,
        }
    }
    let score = |c: Category| per.get(&c).map_or(Score::new(0, 0), |(k, n)| Score::new(*k, *n));
    let (correct, total) = per.values().fold((0, 0), |(a, b), (k, n)| (a + k, b + n));
    Ok(EvalReport {
        task1: score(Category::TypeIdentification),
        task2: score(Category::TaskAssociation),
        task3: score(Category::TaskToPrimitive),
        overall: Score::new(correct, total),
        averaging: "micro".into(),
        missing,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Prediction {
    pub item_id: String,
    pub choice: usize,
}

#[derive(Debug, Error)]
pub enum BenchIoError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("{path}:{line}: {message}")]
    Line { path: PathBuf, line: usize, message: String },
    #[error("{0}")]
    Record(String),
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, BenchIoError> {
    let f = io::BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in f.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| BenchIoError::Line {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> io::Result<()> {
    let mut out = io::BufWriter::new(fs::File::create(path)?);
    for r in rows {
        writeln!(out, "{}", serde_json::to_string(r).map_err(io::Error::other)?)?;
    }
    out.flush()
}

pub fn read_items(path: &Path) -> Result<Vec<VqaItem>, BenchIoError> {
    read_jsonl(path)
}

/// Predictions keyed by item id; a repeated id is an error.
pub fn read_predictions(path: &Path) -> Result<BTreeMap<String, usize>, BenchIoError> {
    let rows: Vec<Prediction> = read_jsonl(path)?;
    let mut out = BTreeMap::new();
    for (i, p) in rows.into_iter().enumerate() {
        if out.insert(p.item_id.clone(), p.choice).is_some() {
            return Err(BenchIoError::Line {
                path: path.to_path_buf(),
                line: i + 1,
                message: format!("duplicate prediction for {}", p.item_id),
            });
        }
    }
    Ok(out)
}

/// All `*.annotation.json` files below `dir`, sorted by object id.
pub fn load_records(dir: &Path) -> Result<Vec<AnnotationRecord>, BenchIoError> {
    let mut paths = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d)? {
            let p = e?.path();
            if p.is_dir() {
                stack.push(p);
            } else if p.to_string_lossy().ends_with(".annotation.json") {
                paths.push(p);
            }
        }
    }
    let mut records = Vec::with_capacity(paths.len());
    for p in paths {
        let rec = parse_annotation(&fs::read(&p)?).map_err(|e| BenchIoError::Record(format!("{}: {e}", p.display())))?;
        records.push(rec);
    }
    records.sort_by(|a, b| a.object_id.cmp(&b.object_id));
    Ok(records)
}
