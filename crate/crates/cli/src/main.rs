use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use pasg_core::aligner::http::HttpProvider;
use pasg_core::aligner::{ScriptedProvider, VlmProvider};
use pasg_core::benchgen::{self, DEFAULT_TRAIN_FRAC};
use pasg_core::pipeline::run::{resume_run, start_run, HaltPoint, RunOptions, RunSummary};
use pasg_core::pipeline::{render_record_overlays, PipelineConfig, Providers, SegFactory};
use pasg_core::segmentation::{FileSegProvider, RemoteSegProvider, SegProvider, SEG_ENDPOINT_ENV};
use pasg_core::semantic::parse_annotation;
use pasg_core::synth;
use pasg_core::view::load_view_set;

/// Exit code when some objects did not reach the final stage.
const EXIT_PARTIAL: u8 = 2;
const MOCK_SCRIPT: &str = "mock_aligner.json";

#[derive(Parser)]
#[command(name = "pasg", version, about = "Annotate objects with interaction primitives and build VQA benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ProviderMode {
    /// Scripted aligner replies from `<input>/mock_aligner.json` and
    /// pre-exported segment masks.
    Mock,
    /// HTTP aligner and segmentation service from the config/environment.
    Live,
}

#[derive(Subcommand)]
enum Command {
    /// Run the annotation pipeline over every object directory in --input.
    Annotate {
        #[arg(long)]
        input: Option<PathBuf>,
        /// TOML (or .json) pipeline config.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Directory holding run directories.
        #[arg(long, default_value = "runs")]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "mock")]
        providers: ProviderMode,
        /// Name of the run directory; defaults to a timestamp.
        #[arg(long)]
        run_id: Option<String>,
        /// Continue the run named by --run-id from its manifest.
        #[arg(long, requires = "run_id")]
        resume: bool,
        /// Stop every object after this stage.
        #[arg(long, hide = true)]
        halt_after: Option<HaltPoint>,
    },
    /// Generate VQA items and splits from annotation files.
    Benchgen {
        #[arg(long)]
        annotations: PathBuf,
        /// File with one held-out object id per line.
        #[arg(long)]
        ood_objects: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_TRAIN_FRAC)]
        train_frac: f64,
    },
    /// Score a predictions file; prints the report as JSON.
    Eval {
        #[arg(long)]
        items: PathBuf,
        #[arg(long)]
        predictions: PathBuf,
    },
    /// Draw a stored annotation record over its views.
    Render {
        #[arg(long)]
        record: PathBuf,
        /// Object directory with view_0 .. view_7.
        #[arg(long)]
        views: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the procedural fixture objects and their scripted aligner replies.
    Synth {
        #[arg(long)]
        out: PathBuf,
        /// Fixture names (teapot, mug, button_box, tilted_cylinder).
        #[arg(long, value_delimiter = ',', default_value = "teapot,mug,button_box")]
        fixtures: Vec<String>,
        #[arg(long, default_value_t = synth::DEFAULT_SIZE)]
        size: usize,
        #[arg(long, default_value_t = synth::DEFAULT_SCALE)]
        scale: f64,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cmd: Command) -> Result<u8> {
    match cmd {
        Command::Annotate {
            input,
            config,
            out,
            providers,
            run_id,
            resume,
            halt_after,
        } => annotate(input, config, out, providers, run_id, resume, halt_after),
        Command::Benchgen {
            annotations,
            ood_objects,
            seed,
            out,
            train_frac,
        } => cmd_benchgen(&annotations, ood_objects.as_deref(), seed, &out, train_frac),
        Command::Eval { items, predictions } => {
            let items = benchgen::read_items(&items)?;
            let preds = benchgen::read_predictions(&predictions)?;
            let report = benchgen::evaluate(&items, &preds)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(0)
        }
        Command::Render { record, views, out } => {
            let rec = parse_annotation(&fs::read(&record).with_context(|| format!("reading {}", record.display()))?)
                .with_context(|| format!("parsing {}", record.display()))?;
            let set = load_view_set(&views)?;
            fs::create_dir_all(&out)?;
            let mut written = Vec::new();
            for (v, img) in set.views.iter().zip(render_record_overlays(&set, &rec)) {
                let p = out.join(format!("view_{}.png", v.meta.view_id));
                img.save(&p).with_context(|| format!("writing {}", p.display()))?;
                written.push(p);
            }
            println!("{}", json!({ "overlays": written }));
            Ok(0)
        }
        Command::Synth {
            out,
            fixtures,
            size,
            scale,
            config,
        } => {
            let cfg = load_config(config.as_deref())?;
            let fx = fixtures
                .iter()
                .map(|n| synth::fixture_by_name(n).with_context(|| format!("unknown fixture {n:?}")))
                .collect::<Result<Vec<_>>>()?;
            synth::write_dataset(&fx, &out, size, scale, &cfg.geometry)?;
            println!("{}", json!({ "out": out, "objects": fixtures }));
            Ok(0)
        }
    }
}

/// Load a config file; `.json` files are parsed as JSON, anything else as TOML.
fn load_config(path: Option<&Path>) -> Result<PipelineConfig> {
    let Some(path) = path else {
        return Ok(PipelineConfig::default());
    };
    let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let cfg: PipelineConfig = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?
    } else {
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?
    };
    if let Err(e) = cfg.validate() {
        bail!("invalid config {}: {e}", path.display());
    }
    Ok(cfg)
}

fn file_seg() -> SegFactory {
    Arc::new(|dir: &Path| Box::new(FileSegProvider::new(dir)) as Box<dyn SegProvider>)
}

fn build_providers(mode: ProviderMode, input: &Path, cfg: &PipelineConfig) -> Result<Providers> {
    match mode {
        ProviderMode::Mock => {
            let path = input.join(MOCK_SCRIPT);
            let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
            let vlm = ScriptedProvider::from_json(&text).with_context(|| format!("parsing {}", path.display()))?;
            Ok(Providers {
                vlm: Arc::new(vlm),
                seg: file_seg(),
            })
        }
        ProviderMode::Live => {
            let vlm_cfg = cfg.vlm.clone().context("live providers need a [vlm] config block")?;
            let vlm: Arc<dyn VlmProvider> = Arc::new(HttpProvider::from_env(vlm_cfg)?);
            let endpoint = cfg.seg_endpoint.clone().or_else(|| std::env::var(SEG_ENDPOINT_ENV).ok());
            let seg: SegFactory = match endpoint {
                Some(url) => {
                    let remote = Arc::new(RemoteSegProvider::new(&url, Duration::from_secs(120))?);
                    remote.healthz().with_context(|| format!("segmentation service at {url}"))?;
                    Arc::new(move |_: &Path| Box::new(SharedSeg(remote.clone())) as Box<dyn SegProvider>)
                }
                None => {
                    tracing::warn!("no segmentation endpoint configured; using exported segment masks");
                    file_seg()
                }
            };
            Ok(Providers { vlm, seg })
        }
    }
}

struct SharedSeg(Arc<RemoteSegProvider>);

impl SegProvider for SharedSeg {
    fn segment(
        &self,
        req: &pasg_core::segmentation::SegmentationRequest,
    ) -> Result<pasg_core::segmentation::SegmentationResult, pasg_core::segmentation::SegError> {
        self.0.segment(req)
    }
}

fn annotate(
    input: Option<PathBuf>,
    config: Option<PathBuf>,
    out: PathBuf,
    mode: ProviderMode,
    run_id: Option<String>,
    resume: bool,
    halt_after: Option<HaltPoint>,
) -> Result<u8> {
    let opts = RunOptions { halt_after };
    let summary = if resume {
        let run_dir = out.join(run_id.expect("clap requires run_id with resume"));
        let manifest = pasg_core::pipeline::run::RunManifest::load(&run_dir)?;
        let input = input.unwrap_or_else(|| manifest.input.clone());
        let providers = build_providers(mode, &input, &manifest.config)?;
        resume_run(&run_dir, &providers, opts)?
    } else {
        let input = input.context("--input is required for a new run")?;
        let cfg = load_config(config.as_deref())?;
        let providers = build_providers(mode, &input, &cfg)?;
        let run_id = run_id.unwrap_or_else(|| {
            let secs = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
            format!("run-{secs}")
        });
        start_run(&input, &out.join(run_id), &cfg, &providers, opts)?
    };
    print_summary(&summary)?;
    Ok(if summary.all_refined() { 0 } else { EXIT_PARTIAL })
}

fn print_summary(s: &RunSummary) -> Result<()> {
    let objects: serde_json::Map<String, serde_json::Value> = s
        .manifest
        .objects
        .iter()
        .map(|(id, e)| (id.clone(), serde_json::to_value(&e.status).expect("status serializes")))
        .collect();
    println!(
        "{}",
        serde_json::to_string_pretty(&json!({ "run_dir": s.run_dir, "objects": objects }))?
    );
    for (id, reason) in s.failed() {
        eprintln!("{id}: failed: {reason}");
    }
    Ok(())
}

fn cmd_benchgen(annotations: &Path, ood: Option<&Path>, seed: u64, out: &Path, train_frac: f64) -> Result<u8> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        bail!("--train-frac must lie in (0, 1)");
    }
    let records = benchgen::load_records(annotations)?;
    if records.is_empty() {
        bail!("no annotation files under {}", annotations.display());
    }
    let ood_ids: BTreeSet<String> = match ood {
        Some(p) => fs::read_to_string(p)
            .with_context(|| format!("reading {}", p.display()))?
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_string)
            .collect(),
        None => BTreeSet::new(),
    };
    let generation = benchgen::generate_all(&records, seed);
    let split = benchgen::split_dataset(&generation.items, train_frac, &ood_ids, seed)?;
    for w in &split.warnings {
        tracing::warn!("{w}");
    }
    fs::create_dir_all(out)?;
    benchgen::write_jsonl(&out.join("items.jsonl"), &generation.items)?;
    benchgen::write_jsonl(&out.join("skipped.jsonl"), &generation.skipped)?;
    benchgen::write_jsonl(&out.join("train.jsonl"), &split.train)?;
    benchgen::write_jsonl(&out.join("test_in.jsonl"), &split.test_in)?;
    benchgen::write_jsonl(&out.join("test_ood.jsonl"), &split.test_ood)?;
    println!(
        "{}",
        serde_json::to_string_pretty(&json!({
            "items": generation.items.len(),
            "skipped": generation.skipped.len(),
            "train": split.train.len(),
            "test_in": split.test_in.len(),
            "test_ood": split.test_ood.len(),
            "seed": seed,
        }))?
    );
    Ok(0)
}
