//! Command-line interface. Exit status: 0 success, 1 domain error,
//! 2 usage error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use layplan_core::codec::{serialize, LayoutFormat};
use layplan_core::geometry::Layout;
use layplan_core::metrics::{failure_rate, format_percent, EmbeddingProvider, GenItem, MatchMode, RefItem, TrigramEmbedder};
use layplan_core::pipeline::{shift_augment, InstructionRecord, SourceKind, SourceRecord};
use layplan_core::planner::{
    embed_corpus, plan_layout, render_svg, retrieve_demonstrations, BackendConfig, ChatBackend, PlanMode, PromptSpec,
    RetrievalIndex, ScriptedBackend, StepConfig,
};
use layplan_core::seed::derive_seed;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::config::{BackendOverrides, EvalOverrides, FileConfig, FilterOverrides};
use crate::generations::{decode_generations, GenLine};
use crate::http_backend::{self, HttpChatBackend};
use crate::io::{read_json, read_jsonl, read_to_string, write_json, write_jsonl, write_text};
use crate::journal::Journal;
use crate::remote_embed::{self, RemoteEmbedder};
use crate::service::{self, AppState, ServiceConfig};
use crate::{ingest, parallel};

#[derive(Debug, Parser)]
#[command(name = "layplan", version, about = "Layout planning: data pipeline, codecs, metrics and an editing service")]
pub struct Cli {
    /// TOML run configuration; command-line flags take precedence
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads; 0 uses every core. Output does not depend on it [default: 0]
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert source annotations into line-delimited source records
    Ingest(IngestArgs),
    /// Filter source records and emit instruction records
    Pipeline(PipelineArgs),
    /// Serialize layouts into a text format
    Encode(EncodeArgs),
    /// Parse model replies; failures are reported, not fatal
    Decode(DecodeArgs),
    /// Apply one random shift to each layout
    Augment(AugmentArgs),
    /// Ask a chat backend for layouts
    Plan(PlanArgs),
    /// Score generated layouts against references
    Eval(EvalArgs),
    /// Run the HTTP service
    Serve(ServeArgs),
    /// Draw a layout as SVG
    Render(RenderArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Embedder {
    /// Built-in character-trigram embedding
    Trigram,
    /// HTTP endpoint from LAYPLAN_EMBED_URL
    Remote,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    /// Label and prompt embedding
    #[arg(long, value_enum, default_value = "trigram")]
    pub embed: Embedder,
    /// Vector length expected from the remote embedder
    #[arg(long, default_value_t = 1536)]
    pub embed_dim: usize,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub source: SourceKind,
    #[arg(long)]
    pub input: PathBuf,
    /// Source records, one JSON object per line
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    /// Source records from `ingest`
    #[arg(long)]
    pub input: PathBuf,
    /// Instruction records, one per task and format
    #[arg(long)]
    pub output: PathBuf,
    /// Counts per rule, task and source as JSON
    #[arg(long)]
    pub stats: Option<PathBuf>,
    /// Comma-separated formats: int128, int1024, float, css128, json [default: int128]
    #[arg(long, value_delimiter = ',')]
    pub formats: Option<Vec<LayoutFormat>>,
    /// Augmentation seed [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub filter: FilterOverrides,
}

#[derive(Debug, Args)]
pub struct EncodeArgs {
    #[arg(long)]
    pub format: LayoutFormat,
    /// Lines of `{"id", "layout"}`; pipeline output also works
    #[arg(long)]
    pub input: PathBuf,
    /// Lines of `{"id", "text", "format"}`, readable by `decode` and `eval`
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct DecodeArgs {
    /// Format for lines that do not name one
    #[arg(long)]
    pub format: LayoutFormat,
    /// `.jsonl` of `{"id", "text"}`, or any other file holding one reply
    #[arg(long)]
    pub input: PathBuf,
    /// Lines of `{"id", "outcome"}`
    #[arg(long)]
    pub output: PathBuf,
    /// Canvas as WIDTHxHEIGHT for lines without one
    #[arg(long, default_value = "128x128", value_parser = parse_canvas)]
    pub canvas: (f64, f64),
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    /// Lines of `{"id", "layout"}`
    #[arg(long)]
    pub input: PathBuf,
    /// Lines of `{"id", "instruction", "layout"}` or `{"id", "error"}`
    #[arg(long)]
    pub output: PathBuf,
    /// Base seed; each layout uses a seed derived from it and its id [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    /// Single description to plan
    #[arg(long, conflicts_with = "prompts", required_unless_present = "prompts")]
    pub caption: Option<String>,
    /// Comma-separated element labels for a single description
    #[arg(long, value_delimiter = ',', requires = "caption")]
    pub targets: Option<Vec<String>>,
    /// Lines of `{"id", "caption", "targets"?, "canvas_w"?, "canvas_h"?}`
    #[arg(long)]
    pub prompts: Option<PathBuf>,
    #[arg(long, default_value = "int128")]
    pub format: LayoutFormat,
    #[arg(long, default_value = "closed")]
    pub mode: PlanMode,
    /// Canvas as WIDTHxHEIGHT
    #[arg(long, default_value = "128x128", value_parser = parse_canvas)]
    pub canvas: (f64, f64),
    /// Retrieved demonstrations; 0 uses the three fixed ones
    #[arg(long, default_value_t = 0)]
    pub k: usize,
    /// Instruction records to retrieve demonstrations from
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Reply with this file's contents instead of calling LAYPLAN_BACKEND_URL
    #[arg(long)]
    pub stub_reply: Option<PathBuf>,
    /// Lines of `{"id", "text", "format"}`; stdout when omitted
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[command(flatten)]
    pub backend: BackendOverrides,
    #[command(flatten)]
    pub embed: EmbedArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Lines of `{"id", "text", "format"?}`
    #[arg(long = "gen")]
    pub generated: PathBuf,
    /// Lines of `{"id", "layout"}`; pipeline output also works
    #[arg(long = "ref")]
    pub reference: PathBuf,
    #[arg(long, default_value = "closed")]
    pub mode: MatchMode,
    /// Format for lines that do not name one
    #[arg(long, default_value = "int128")]
    pub format: LayoutFormat,
    /// Full JSON report including per-item diagnostics
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[command(flatten)]
    pub eval: EvalOverrides,
    #[command(flatten)]
    pub embed: EmbedArgs,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    /// Directory of session journals; sessions are restored from it on start
    #[arg(long)]
    pub journal: Option<PathBuf>,
    /// Root for file paths given to /evaluate
    #[arg(long, default_value = ".")]
    pub data_dir: PathBuf,
    /// Instruction records to retrieve demonstrations from
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Browser origin allowed to call the API (repeatable), e.g. http://localhost:5173
    #[arg(long)]
    pub allow_origin: Vec<String>,
    /// IoU cap for deterministic edits
    #[arg(long, default_value_t = 0.01)]
    pub tau_o: f64,
    #[command(flatten)]
    pub backend: BackendOverrides,
    #[command(flatten)]
    pub eval: EvalOverrides,
    #[command(flatten)]
    pub embed: EmbedArgs,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    /// A layout as JSON, `{"id", "layout"}`, or `.jsonl` of the latter
    #[arg(long)]
    pub input: PathBuf,
    /// SVG file, or a directory when the input is `.jsonl`
    #[arg(long)]
    pub output: PathBuf,
}

fn parse_canvas(s: &str) -> Result<(f64, f64), String> {
    let (w, h) = s.split_once(['x', 'X']).ok_or("expected WIDTHxHEIGHT")?;
    let w: f64 = w.trim().parse().map_err(|_| "bad width")?;
    let h: f64 = h.trim().parse().map_err(|_| "bad height")?;
    if !(w.is_finite() && h.is_finite() && w > 0.0 && h > 0.0) {
        return Err("canvas sides must be positive".into());
    }
    Ok((w, h))
}

#[derive(Debug, Error)]
#[error("{0}")]
pub struct CliError(String);

macro_rules! impl_from {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError(e.to_string())
            }
        }
    )*};
}

impl_from!(
    crate::io::IoError,
    crate::ingest::IngestError,
    crate::config::ConfigFileError,
    crate::journal::JournalError,
    layplan_core::pipeline::PipelineError,
    layplan_core::metrics::EvalError,
    layplan_core::metrics::ProviderError,
    layplan_core::planner::RetrievalError,
    layplan_core::planner::BackendError,
    std::io::Error
);

/// Parses arguments and runs a command, returning the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).try_init();
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let file = FileConfig::load(cli.config.as_deref())?;
    let workers = cli.workers.or(file.workers).unwrap_or(0);
    match cli.command {
        Command::Ingest(a) => cmd_ingest(a),
        Command::Pipeline(a) => cmd_pipeline(a, &file, workers),
        Command::Encode(a) => cmd_encode(a),
        Command::Decode(a) => cmd_decode(a),
        Command::Augment(a) => cmd_augment(a, &file),
        Command::Plan(a) => cmd_plan(a, &file),
        Command::Eval(a) => cmd_eval(a, &file, workers),
        Command::Serve(a) => cmd_serve(a, &file, workers),
        Command::Render(a) => cmd_render(a),
    }
}

fn log_config(name: &str, value: &impl Serialize) {
    log::info!("{name}: {}", serde_json::to_string(value).unwrap_or_default());
}

fn cmd_ingest(a: IngestArgs) -> Result<(), CliError> {
    let report = ingest::ingest(&a.input, a.source)?;
    for w in &report.warnings {
        log::warn!("{w}");
    }
    write_jsonl(&a.output, &report.records)?;
    println!("{}", serde_json::to_string(&report).unwrap_or_default());
    Ok(())
}

fn cmd_pipeline(a: PipelineArgs, file: &FileConfig, workers: usize) -> Result<(), CliError> {
    let cfg = a.filter.or(&file.filter).resolve();
    let formats = a.formats.or_else(|| file.formats.clone()).unwrap_or_else(|| vec![LayoutFormat::IntList128]);
    let seed = a.seed.or(file.seed).unwrap_or(0);
    log_config("filter", &cfg);
    log::info!("formats: {formats:?}, seed: {seed}, workers: {workers}");
    let records: Vec<SourceRecord> = read_jsonl(&a.input)?;
    let (out, stats) = parallel::run_pipeline(&records, &cfg, &formats, seed, workers)?;
    write_jsonl(&a.output, &out)?;
    if let Some(p) = &a.stats {
        write_json(p, &stats)?;
    }
    println!(
        "{} source records, {} kept, {} dropped, {} instruction records",
        stats.input_records,
        stats.kept_records,
        stats.total_dropped(),
        stats.output_records
    );
    Ok(())
}

/// `{"id", "layout"}` with `target_layout` accepted as an alias.
fn read_layouts(path: &Path) -> Result<Vec<RefItem>, CliError> {
    Ok(read_jsonl(path)?)
}

fn cmd_encode(a: EncodeArgs) -> Result<(), CliError> {
    let out: Vec<GenLine> = read_layouts(&a.input)?
        .into_iter()
        .map(|r| GenLine {
            id: r.id,
            text: serialize(&r.layout, a.format),
            format: Some(a.format.name().into()),
            canvas_w: Some(r.layout.canvas_w),
            canvas_h: Some(r.layout.canvas_h),
        })
        .collect();
    write_jsonl(&a.output, &out)?;
    Ok(())
}

fn cmd_decode(a: DecodeArgs) -> Result<(), CliError> {
    let lines: Vec<GenLine> = if a.input.extension().is_some_and(|e| e == "jsonl") {
        read_jsonl(&a.input)?
    } else {
        let id = a.input.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        vec![GenLine {
            id,
            text: read_to_string(&a.input)?,
            format: None,
            canvas_w: None,
            canvas_h: None,
        }]
    };
    let lines: Vec<GenLine> = lines
        .into_iter()
        .map(|mut l| {
            l.canvas_w = l.canvas_w.or(Some(a.canvas.0));
            l.canvas_h = l.canvas_h.or(Some(a.canvas.1));
            l
        })
        .collect();
    let items = decode_generations(&lines, a.format, &[]);
    write_jsonl(&a.output, &items)?;
    let outcomes: Vec<_> = items.iter().map(|g| g.outcome.clone()).collect();
    let rate = failure_rate(&outcomes).map(format_percent).unwrap_or_else(|_| "n/a".into());
    println!("{} replies, failure rate {rate}%", items.len());
    Ok(())
}

#[derive(Serialize)]
#[serde(untagged)]
enum AugmentLine {
    Shifted {
        id: String,
        instruction: layplan_core::pipeline::ShiftInstruction,
        layout: Layout,
    },
    Failed {
        id: String,
        error: String,
    },
}

fn cmd_augment(a: AugmentArgs, file: &FileConfig) -> Result<(), CliError> {
    let seed = a.seed.or(file.seed).unwrap_or(0);
    log::info!("seed: {seed}");
    let out: Vec<AugmentLine> = read_layouts(&a.input)?
        .into_iter()
        .map(|r| match shift_augment(&r.layout, derive_seed(seed, &r.id)) {
            Ok((instruction, layout)) => AugmentLine::Shifted {
                id: r.id,
                instruction,
                layout,
            },
            Err(e) => AugmentLine::Failed {
                id: r.id,
                error: e.to_string(),
            },
        })
        .collect();
    write_jsonl(&a.output, &out)?;
    Ok(())
}

fn provider(e: &EmbedArgs) -> Result<Arc<dyn EmbeddingProvider>, CliError> {
    Ok(match e.embed {
        Embedder::Trigram => Arc::new(TrigramEmbedder::default()),
        Embedder::Remote => Arc::new(
            RemoteEmbedder::from_env(e.embed_dim)
                .ok_or_else(|| CliError(format!("--embed remote needs {} in the environment", remote_embed::URL_VAR)))?,
        ),
    })
}

fn http_backend(cfg: BackendConfig) -> Option<HttpChatBackend> {
    let b = HttpChatBackend::from_env(cfg)?;
    log::info!("chat backend from {}, model {}", http_backend::URL_VAR, b.config().model);
    Some(b)
}

fn load_index(corpus: Option<&Path>, provider: &dyn EmbeddingProvider) -> Result<Option<RetrievalIndex>, CliError> {
    let Some(p) = corpus else { return Ok(None) };
    let records: Vec<InstructionRecord> = read_jsonl(p)?;
    let index = embed_corpus(&records, provider)?;
    log::info!("retrieval corpus: {} entries", index.len());
    Ok(Some(index))
}

#[derive(Deserialize)]
struct PromptLine {
    id: String,
    caption: String,
    #[serde(default)]
    targets: Option<Vec<String>>,
    #[serde(default)]
    canvas_w: Option<f64>,
    #[serde(default)]
    canvas_h: Option<f64>,
}

fn cmd_plan(a: PlanArgs, file: &FileConfig) -> Result<(), CliError> {
    let bcfg = a.backend.or(&file.backend).resolve(0);
    log_config("backend", &bcfg);
    let backend: Box<dyn ChatBackend> = match &a.stub_reply {
        Some(p) => Box::new(ScriptedBackend::always(read_to_string(p)?)),
        None => Box::new(http_backend(bcfg.clone()).ok_or_else(|| {
            CliError(format!("no chat backend: set {} or pass --stub-reply", http_backend::URL_VAR))
        })?),
    };
    let provider = provider(&a.embed)?;
    if a.k > 0 && a.corpus.is_none() {
        return Err(CliError("--k > 0 needs --corpus".into()));
    }
    let index = load_index(a.corpus.as_deref(), provider.as_ref())?.unwrap_or(RetrievalIndex { entries: Vec::new() });

    let prompts: Vec<PromptLine> = match (&a.caption, &a.prompts) {
        (Some(c), _) => vec![PromptLine {
            id: "prompt".into(),
            caption: c.clone(),
            targets: a.targets.clone(),
            canvas_w: None,
            canvas_h: None,
        }],
        (None, Some(p)) => read_jsonl(p)?,
        (None, None) => unreachable!("clap requires one of --caption and --prompts"),
    };
    let mut out = Vec::with_capacity(prompts.len());
    for p in prompts {
        let mut spec = PromptSpec::new(p.caption, a.format, a.mode)
            .with_canvas(p.canvas_w.unwrap_or(a.canvas.0), p.canvas_h.unwrap_or(a.canvas.1));
        spec.target_elements = p.targets;
        if !spec.canvas_ok() {
            return Err(CliError(format!("{}: canvas must be positive", p.id)));
        }
        let demos = retrieve_demonstrations(&spec.caption, &index, a.k, a.format, provider.as_ref())?;
        let r = plan_layout(&spec, &demos, backend.as_ref(), bcfg.retries)?;
        if let Some(reason) = r.outcome.failure_reason() {
            log::warn!("{}: reply did not parse ({reason})", p.id);
        }
        out.push(GenLine {
            id: p.id,
            text: r.raw_reply().to_string(),
            format: Some(a.format.name().into()),
            canvas_w: Some(spec.canvas_w),
            canvas_h: Some(spec.canvas_h),
        });
    }
    match &a.output {
        Some(p) => write_jsonl(p, &out)?,
        None => {
            for l in &out {
                println!("{}", serde_json::to_string(l).unwrap_or_default());
            }
        }
    }
    Ok(())
}

fn cmd_eval(a: EvalArgs, file: &FileConfig, workers: usize) -> Result<(), CliError> {
    let mcfg = a.eval.or(&file.eval).resolve();
    log_config("match", &mcfg);
    log::info!("mode: {:?}, workers: {workers}", a.mode);
    let refs: Vec<RefItem> = read_layouts(&a.reference)?;
    let lines: Vec<GenLine> = read_jsonl(&a.generated)?;
    let gen: Vec<GenItem> = decode_generations(&lines, a.format, &refs);
    let provider = provider(&a.embed)?;
    let report = parallel::evaluate(&gen, &refs, a.mode, provider.as_ref(), &mcfg, workers)?;
    if let Some(p) = &a.report {
        write_json(p, &report)?;
    }
    let fid = report.fid.map_or("n/a".to_string(), |f| format!("{f:.4}"));
    println!(
        "{}",
        json!({
            "items": report.n_generated,
            "fid": fid,
            "max_iou": format!("{:.4}", report.max_iou),
            "fail_percent": format_percent(report.fail_percent),
            "precision": format!("{:.4}", report.precision),
            "recall": format!("{:.4}", report.recall),
            "f_score": format!("{:.4}", report.f_score),
        })
    );
    Ok(())
}

fn cmd_serve(a: ServeArgs, file: &FileConfig, workers: usize) -> Result<(), CliError> {
    let bcfg = a.backend.or(&file.backend).resolve(1);
    let mcfg = a.eval.or(&file.eval).resolve();
    log_config("backend", &bcfg);
    let backend: Option<Arc<dyn ChatBackend>> = match http_backend(bcfg.clone()) {
        Some(b) => Some(Arc::new(b)),
        None => {
            log::warn!("{} is not set; only deterministic edits are available", http_backend::URL_VAR);
            None
        }
    };
    let provider = provider(&a.embed)?;
    let index = load_index(a.corpus.as_deref(), provider.as_ref())?.map(Arc::new);
    let journal = a.journal.as_ref().map(Journal::open).transpose()?;
    let token = std::env::var(service::TOKEN_VAR).ok().filter(|t| !t.is_empty());
    if token.is_none() {
        log::warn!("{} is not set; the service accepts unauthenticated requests", service::TOKEN_VAR);
    }
    let config = ServiceConfig {
        token,
        data_root: a.data_dir,
        step: StepConfig {
            tau_o: a.tau_o,
            retries: bcfg.retries,
        },
        plan_retries: bcfg.retries,
        match_config: mcfg,
        workers,
        allowed_origins: a.allow_origin,
    };
    let state = Arc::new(AppState::new(config, backend, provider, index, journal)?);
    log::info!("restored {} sessions", state.session_count());
    let app = service::router(state);
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind((a.host.as_str(), a.port)).await?;
        log::info!("listening on {}", listener.local_addr()?);
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
    })?;
    Ok(())
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RenderInput {
    Keyed(RefItem),
    Bare(Layout),
}

fn cmd_render(a: RenderArgs) -> Result<(), CliError> {
    if a.input.extension().is_some_and(|e| e == "jsonl") {
        for r in read_layouts(&a.input)? {
            let name: String = r.id.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect();
            write_text(&a.output.join(format!("{name}.svg")), &render_svg(&r.layout))?;
        }
        return Ok(());
    }
    let layout = match read_json::<RenderInput>(&a.input)? {
        RenderInput::Keyed(r) => r.layout,
        RenderInput::Bare(l) => l,
    };
    write_text(&a.output, &render_svg(&layout))?;
    Ok(())
}
