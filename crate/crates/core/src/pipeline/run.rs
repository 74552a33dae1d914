//! Run manifests, object scheduling and resume.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{
    annotation_path, load_alignment, load_geometry, overlay_path, stage_align, stage_extract, stage_refine,
    trace_path, AlignContext, PipelineConfig, Providers, StageError, ALIGN_FILE, GEOMETRY_FILE, IDENTIFY_FILE,
};
use crate::aligner::{BoundedProvider, Transcript, VlmProvider};
use crate::view::{load_view_set, VIEW_COUNT};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ObjectStatus {
    Pending,
    Extracted,
    Aligned,
    Refined,
    Failed { reason: String },
}

impl ObjectStatus {
    pub fn is_terminal(&self) -> bool {
        matches!(self, ObjectStatus::Refined | ObjectStatus::Failed { .. })
    }

    pub fn name(&self) -> &'static str {
        match self {
            ObjectStatus::Pending => "pending",
            ObjectStatus::Extracted => "extracted",
            ObjectStatus::Aligned => "aligned",
            ObjectStatus::Refined => "refined",
            ObjectStatus::Failed { .. } => "failed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageTiming {
    /// Milliseconds since the Unix epoch when the stage finished.
    pub finished_at_ms: u64,
    pub elapsed_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectEntry {
    #[serde(flatten)]
    pub status: ObjectStatus,
    /// Keyed by the status the stage produced.
    #[serde(default)]
    pub timings: BTreeMap<String, StageTiming>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub input: PathBuf,
    pub config: PipelineConfig,
    pub objects: BTreeMap<String, ObjectEntry>,
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("corrupt manifest {path}: {message}")]
    CorruptManifest { path: PathBuf, message: String },
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("no objects found under {0}")]
    NoObjects(PathBuf),
    #[error("run directory {0} already has a manifest; resume it instead")]
    AlreadyExists(PathBuf),
}

/// Write `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

impl RunManifest {
    pub fn load(run_dir: &Path) -> Result<Self, RunError> {
        let path = run_dir.join(MANIFEST_FILE);
        let bytes = fs::read(&path).map_err(|e| RunError::CorruptManifest {
            path: path.clone(),
            message: e.to_string(),
        })?;
        serde_json::from_slice(&bytes).map_err(|e| RunError::CorruptManifest {
            path,
            message: e.to_string(),
        })
    }

    pub fn save(&self, run_dir: &Path) -> io::Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(io::Error::other)? + "\n";
        write_atomic(&run_dir.join(MANIFEST_FILE), text.as_bytes())
    }

    pub fn status(&self, object_id: &str) -> Option<&ObjectStatus> {
        self.objects.get(object_id).map(|e| &e.status)
    }
}

/// Serializes manifest updates and persists each one.
struct ManifestWriter {
    run_dir: PathBuf,
    manifest: Mutex<RunManifest>,
}

impl ManifestWriter {
    fn set(&self, object_id: &str, status: ObjectStatus, elapsed_ms: Option<u64>) -> io::Result<()> {
        let mut m = self.manifest.lock().unwrap_or_else(|e| e.into_inner());
        let entry = m.objects.entry(object_id.to_string()).or_insert_with(|| ObjectEntry {
            status: ObjectStatus::Pending,
            timings: BTreeMap::new(),
        });
        if let Some(elapsed_ms) = elapsed_ms {
            entry.timings.insert(
                status.name().to_string(),
                StageTiming {
                    finished_at_ms: now_ms(),
                    elapsed_ms,
                },
            );
        }
        entry.status = status;
        m.save(&self.run_dir)
    }

    fn into_inner(self) -> RunManifest {
        self.manifest.into_inner().unwrap_or_else(|e| e.into_inner())
    }
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

/// Where to stop each object, for staged runs and fault-injection tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RunOptions {
    pub halt_after: Option<HaltPoint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HaltPoint {
    Extracted,
    Aligned,
}

impl std::str::FromStr for HaltPoint {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "extracted" => Ok(HaltPoint::Extracted),
            "aligned" => Ok(HaltPoint::Aligned),
            other => Err(format!("unknown halt point {other:?} (extracted|aligned)")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub run_dir: PathBuf,
    pub manifest: RunManifest,
}

impl RunSummary {
    pub fn all_refined(&self) -> bool {
        self.manifest.objects.values().all(|e| e.status == ObjectStatus::Refined)
    }

    pub fn failed(&self) -> Vec<(&str, &str)> {
        self.manifest
            .objects
            .iter()
            .filter_map(|(id, e)| match &e.status {
                ObjectStatus::Failed { reason } => Some((id.as_str(), reason.as_str())),
                _ => None,
            })
            .collect()
    }
}

/// Object directories (those containing `view_0`) under `input`, by name.
pub fn discover_objects(input: &Path) -> io::Result<Vec<String>> {
    let mut ids: Vec<String> = fs::read_dir(input)?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().join("view_0").is_dir())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .collect();
    ids.sort();
    Ok(ids)
}

/// Start a new run under `run_dir`.
pub fn start_run(
    input: &Path,
    run_dir: &Path,
    config: &PipelineConfig,
    providers: &Providers,
    opts: RunOptions,
) -> Result<RunSummary, RunError> {
    config.validate().map_err(RunError::Config)?;
    if run_dir.join(MANIFEST_FILE).exists() {
        return Err(RunError::AlreadyExists(run_dir.to_path_buf()));
    }
    let ids = discover_objects(input)?;
    if ids.is_empty() {
        return Err(RunError::NoObjects(input.to_path_buf()));
    }
    fs::create_dir_all(run_dir)?;
    let run_id = run_dir
        .file_name()
        .map_or_else(|| "run".to_string(), |n| n.to_string_lossy().into_owned());
    let manifest = RunManifest {
        run_id,
        input: input.to_path_buf(),
        config: config.clone(),
        objects: ids
            .into_iter()
            .map(|id| {
                (
                    id,
                    ObjectEntry {
                        status: ObjectStatus::Pending,
                        timings: BTreeMap::new(),
                    },
                )
            })
            .collect(),
    };
    manifest.save(run_dir)?;
    execute(run_dir, manifest, providers, opts)
}

/// Continue a run from its manifest.
pub fn resume_run(run_dir: &Path, providers: &Providers, opts: RunOptions) -> Result<RunSummary, RunError> {
    let mut manifest = RunManifest::load(run_dir)?;
    manifest.config.validate().map_err(RunError::Config)?;
    for (id, entry) in manifest.objects.iter_mut() {
        let valid = valid_status(&run_dir.join(id), id, &entry.status);
        if valid != entry.status {
            tracing::warn!(object = %id, from = entry.status.name(), to = valid.name(), "artifacts missing, demoting");
            entry.status = valid;
        }
    }
    manifest.save(run_dir)?;
    execute(run_dir, manifest, providers, opts)
}

fn has_overlays(out: &Path) -> bool {
    (0..VIEW_COUNT).all(|v| overlay_path(out, None, v).is_file())
}

/// The latest status whose artifacts (and those of all earlier stages) exist.
pub fn valid_status(out: &Path, object_id: &str, claimed: &ObjectStatus) -> ObjectStatus {
    if matches!(claimed, ObjectStatus::Failed { .. }) {
        return claimed.clone();
    }
    let rank = |s: &ObjectStatus| match s {
        ObjectStatus::Pending => 0,
        ObjectStatus::Extracted => 1,
        ObjectStatus::Aligned => 2,
        _ => 3,
    };
    let checks = [
        out.join(GEOMETRY_FILE).is_file() && has_overlays(out),
        out.join(IDENTIFY_FILE).is_file() && out.join(ALIGN_FILE).is_file(),
        annotation_path(out, object_id).is_file() && trace_path(out, object_id).is_file(),
    ];
    let reached = checks.iter().take(rank(claimed)).take_while(|ok| **ok).count();
    match reached {
        0 => ObjectStatus::Pending,
        1 => ObjectStatus::Extracted,
        2 => ObjectStatus::Aligned,
        _ => ObjectStatus::Refined,
    }
}

fn execute(run_dir: &Path, manifest: RunManifest, providers: &Providers, opts: RunOptions) -> Result<RunSummary, RunError> {
    let config = manifest.config.clone();
    let input = manifest.input.clone();
    let todo: Vec<(String, ObjectStatus)> = manifest
        .objects
        .iter()
        .filter(|(_, e)| !e.status.is_terminal())
        .map(|(id, e)| (id.clone(), e.status.clone()))
        .collect();
    let writer = ManifestWriter {
        run_dir: run_dir.to_path_buf(),
        manifest: Mutex::new(manifest),
    };
    let vlm = BoundedProvider::new(providers.vlm.clone(), config.max_concurrent_requests);
    let workers = if config.workers == 0 {
        todo.len().min(std::thread::available_parallelism().map_or(1, |n| n.get())).max(1)
    } else {
        config.workers
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(io::Error::other)?;
    let io_errors: Vec<io::Error> = pool.install(|| {
        todo.par_iter()
            .filter_map(|(id, status)| {
                let r = run_object(id, status.clone(), &input, run_dir, &config, &vlm, providers, &writer, opts);
                r.err()
            })
            .collect()
    });
    if let Some(e) = io_errors.into_iter().next() {
        return Err(RunError::Io(e));
    }
    Ok(RunSummary {
        run_dir: run_dir.to_path_buf(),
        manifest: writer.into_inner(),
    })
}

/// Drive one object from `status` as far as it goes. Stage failures are
/// recorded in the manifest; only manifest write errors are returned.
#[allow(clippy::too_many_arguments)]
fn run_object(
    id: &str,
    mut status: ObjectStatus,
    input: &Path,
    run_dir: &Path,
    config: &PipelineConfig,
    vlm: &dyn VlmProvider,
    providers: &Providers,
    writer: &ManifestWriter,
    opts: RunOptions,
) -> io::Result<()> {
    let out = run_dir.join(id);
    let object_dir = input.join(id);
    let span = tracing::info_span!("object", id);
    let _g = span.enter();
    let result = (|| -> Result<(), StageError> {
        fs::create_dir_all(&out)?;
        let set = load_view_set(&object_dir)?;
        let transcript = Transcript::open(&run_dir.join("logs").join(format!("{id}.transcript.jsonl")))?;
        let ctx = AlignContext {
            provider: vlm,
            retry: config.retry.policy(),
            transcript: Some(&transcript),
        };
        loop {
            let started = Instant::now();
            let next = match status {
                ObjectStatus::Pending => {
                    stage_extract(&set, &out, &config.geometry)?;
                    ObjectStatus::Extracted
                }
                ObjectStatus::Extracted => {
                    load_geometry(&out)?;
                    stage_align(id, &set, &out, &ctx)?;
                    ObjectStatus::Aligned
                }
                ObjectStatus::Aligned => {
                    let art = load_geometry(&out)?;
                    let (identified, corrs) = load_alignment(&out)?;
                    let seg = (providers.seg)(&object_dir);
                    stage_refine(
                        id,
                        &set,
                        &out,
                        &art,
                        &identified,
                        corrs,
                        seg.as_ref(),
                        &ctx,
                        &config.geometry,
                        &config.refine,
                    )?;
                    ObjectStatus::Refined
                }
                ObjectStatus::Refined | ObjectStatus::Failed { .. } => return Ok(()),
            };
            tracing::info!(stage = next.name(), "stage complete");
            writer
                .set(id, next.clone(), Some(started.elapsed().as_millis() as u64))
                .map_err(StageError::Io)?;
            let halt = matches!(
                (opts.halt_after, &next),
                (Some(HaltPoint::Extracted), ObjectStatus::Extracted) | (Some(HaltPoint::Aligned), ObjectStatus::Aligned)
            );
            if halt {
                return Ok(());
            }
            status = next;
        }
    })();
    match result {
        Ok(()) => Ok(()),
        Err(e) => {
            tracing::warn!(error = %e, "object failed");
            writer.set(id, ObjectStatus::Failed { reason: e.reason() }, None)
        }
    }
}
