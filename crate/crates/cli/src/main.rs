//! babelkit: one entry point exposing every pipeline stage as a subcommand.
//!
//! Exit codes: 0 success, 1 data errors (stage manifest still written),
//! 2 configuration errors. Every stage writes a `<out>.manifest.json`
//! sidecar carrying counts, drop reasons, and the config fingerprint.

use babelkit::config::{BackendKind, PipelineConfig};
use babelkit::curate::{self, VerdictRecord};
use babelkit::eval;
use babelkit::filter;
use babelkit::generate::{self, Caption, CountryLanguageMap};
use babelkit::ingest::{self, ProbeMode};
use babelkit::jsonl;
use babelkit::lang::LangTag;
use babelkit::llm::{
    Client, HttpBackend, MockBackend, RateLimiter, ResponseCache, ScriptedBackend,
};
use babelkit::mix;
use babelkit::translate::{self, EnforceOutcome, TranslatedRecord};
use babelkit::types::{
    validate_sample, CurationVerdict, InstructionSample, RubricInstance, SourceRecord,
    StageManifest,
};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

#[derive(Parser)]
#[command(
    name = "babelkit",
    version,
    about = "multilingual multimodal instruction corpus toolkit"
)]
struct Cli {
    /// TOML run configuration; defaults apply when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Worker parallelism. Outputs are byte-identical for any value.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,

    /// Override the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// No network: probing off, http backend replaced by cache replay.
    #[arg(long, global = true)]
    offline: bool,

    /// Override the configured backend kind.
    #[arg(long, global = true)]
    backend: Option<BackendArg>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Scripted,
    Mock,
    Http,
}

#[derive(Subcommand)]
enum Command {
    /// Read, validate, and optionally probe a raw record corpus.
    Ingest(IngestArgs),
    /// Heuristic gates, deduplication, and the alignment gate.
    Filter(FilterArgs),
    /// LLM scoring, quality/country policy, subject balancing.
    Curate(CurateArgs),
    /// Culture-aware caption regeneration.
    Recaption(RecaptionArgs),
    /// Instruction generation from captions.
    Generate(GenerateArgs),
    /// Translate English samples into a target language.
    Translate(TranslateArgs),
    /// Validate translations against their sources.
    Validate(ValidateArgs),
    /// Plan and sample a language mixture from a corpus.
    Mix(MixArgs),
    /// Plan an English-ratio sweep (manifest generation only).
    Sweep(SweepArgs),
    /// Score prediction files against a benchmark with a metric.
    Eval(EvalArgs),
    /// Rubric-judge responses to an evaluation set.
    Judge(JudgeArgs),
    /// Language distribution of a corpus.
    Stats(StatsArgs),
    /// Aggregate per-dataset scores into an en/mul report.
    Report(ReportArgs),
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Also write a shard plan for this many shards.
    #[arg(long)]
    shards: Option<u32>,
    #[arg(long)]
    shard_plan: Option<PathBuf>,
}

#[derive(Args)]
struct FilterArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Alignment score fixture (JSONL {id, score}); absent = pass-through.
    #[arg(long)]
    scores: Option<PathBuf>,
}

#[derive(Args)]
struct CurateArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Verdict store; reused verbatim on re-runs (idempotent curation).
    #[arg(long)]
    verdicts: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RecaptionArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    verdicts: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    captions: PathBuf,
    /// Record file carrying image URIs for the captioned ids.
    #[arg(long)]
    records: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TranslateArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    target: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    orig: PathBuf,
    #[arg(long)]
    trans: PathBuf,
    /// Manifest path; defaults to `<trans>.validate.manifest.json`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum WeightsArg {
    /// Equal weights over the pool's non-English languages.
    Uniform,
    /// The published reference distribution.
    Reference,
}

#[derive(Args)]
struct MixArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    total: u64,
    #[arg(long)]
    english_fraction: f64,
    #[arg(long, value_enum, default_value_t = WeightsArg::Uniform)]
    weights: WeightsArg,
    /// Selected sample ids, one per line.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    plan_out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    total: u64,
    /// Comma-separated English fractions, e.g. 0.0,0.4,1.0
    #[arg(long)]
    ratios: String,
    #[arg(long)]
    k_langs: usize,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum EvalTask {
    /// Multiple-choice accuracy.
    Mc,
    /// Normalized short-answer exact match.
    Short,
    /// ROUGE-L F-measure (x100).
    Rouge,
    /// chrF.
    Chrf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long, value_enum)]
    task: EvalTask,
    #[arg(long)]
    bench: PathBuf,
    #[arg(long)]
    pred: PathBuf,
    /// Dataset name used as the key in the scores file.
    #[arg(long)]
    name: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct JudgeArgs {
    #[arg(long)]
    bench: PathBuf,
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Dataset name for per-language mean scores.
    #[arg(long)]
    name: Option<String>,
    #[arg(long)]
    scores_out: Option<PathBuf>,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Scores file: {dataset: {language: score}}.
    #[arg(long)]
    scores: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    table_out: Option<PathBuf>,
}

// ---------------------------------------------------------------------------
// Error and exit-code plumbing
// ---------------------------------------------------------------------------

#[derive(Debug)]
enum AppError {
    Config(String),
    Data(String),
}

impl std::fmt::Display for AppError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AppError::Config(m) => write!(f, "config error: {m}"),
            AppError::Data(m) => write!(f, "{m}"),
        }
    }
}

impl From<babelkit::config::ConfigError> for AppError {
    fn from(e: babelkit::config::ConfigError) -> Self {
        AppError::Config(e.to_string())
    }
}

impl From<jsonl::JsonlError> for AppError {
    fn from(e: jsonl::JsonlError) -> Self {
        AppError::Data(e.to_string())
    }
}

impl From<std::io::Error> for AppError {
    fn from(e: std::io::Error) -> Self {
        AppError::Data(e.to_string())
    }
}

fn data_err(e: impl std::fmt::Display) -> AppError {
    AppError::Data(e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(AppError::Data(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(AppError::Config(m)) => {
            eprintln!("config error: {m}");
            ExitCode::from(2)
        }
    }
}

// ---------------------------------------------------------------------------
// Shared context
// ---------------------------------------------------------------------------

struct Ctx {
    config: PipelineConfig,
    fingerprint: String,
    offline: bool,
}

impl Ctx {
    fn seed(&self) -> u64 {
        self.config.seed
    }

    fn model(&self) -> &str {
        &self.config.backend.model
    }

    fn client(&self) -> Result<Client, AppError> {
        let backend = &self.config.backend;
        let mut client = match backend.kind {
            BackendKind::Scripted => Client::new(Box::new(ScriptedBackend::new())),
            BackendKind::Mock => {
                let dir = backend.fixtures_dir.as_ref().ok_or(AppError::Config(
                    "missing config key: backend.fixtures_dir".into(),
                ))?;
                Client::new(Box::new(MockBackend::new(dir)))
            }
            BackendKind::Http if self.offline => {
                // offline replay: responses must come from the cache
                let dir = backend.cache_dir.as_ref().ok_or(AppError::Config(
                    "missing config key: backend.cache_dir".into(),
                ))?;
                Client::new(Box::new(MockBackend::new(dir)))
            }
            BackendKind::Http => {
                let http = HttpBackend::new(backend.connection())
                    .map_err(|e| AppError::Config(e.to_string()))?;
                Client::new(Box::new(http))
                    .with_limiter(RateLimiter::new(
                        backend.requests_per_second,
                        backend.max_in_flight,
                    ))
                    .with_retry(backend.retry.clone())
            }
        };
        if let Some(dir) = &backend.cache_dir {
            client = client.with_cache(ResponseCache::open(dir)?);
        }
        Ok(client)
    }
}

fn build_ctx(cli: &Cli) -> Result<Ctx, AppError> {
    let mut config = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(backend) = cli.backend {
        config.backend.kind = match backend {
            BackendArg::Scripted => BackendKind::Scripted,
            BackendArg::Mock => BackendKind::Mock,
            BackendArg::Http => BackendKind::Http,
        };
    }
    if cli.offline {
        config.ingest.probe = false;
    }
    config.validate()?;
    let fingerprint = config.fingerprint();
    Ok(Ctx {
        config,
        fingerprint,
        offline: cli.offline,
    })
}

fn manifest_path(out: &Path, infix: Option<&str>) -> PathBuf {
    let mut name = out
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    match infix {
        Some(infix) => name.push_str(&format!(".{infix}.manifest.json")),
        None => name.push_str(".manifest.json"),
    }
    out.with_file_name(name)
}

fn write_manifest(path: &Path, manifest: &StageManifest) -> Result<(), AppError> {
    manifest
        .check()
        .map_err(|e| AppError::Data(e.to_string()))?;
    let json = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    std::fs::write(path, json + "\n")?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), AppError> {
    let json = serde_json::to_string_pretty(value).expect("value serializes");
    std::fs::write(path, json + "\n")?;
    Ok(())
}

/// One prediction per line: `{"text": ...}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct PredLine {
    text: String,
}

fn read_predictions(path: &Path) -> Result<Vec<String>, AppError> {
    let lines: Vec<PredLine> = jsonl::read_all(path)?;
    Ok(lines.into_iter().map(|l| l.text).collect())
}

fn run(cli: Cli) -> Result<(), AppError> {
    // worker count never changes output bytes, only wall time
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs.max(1))
        .build_global();
    let ctx = build_ctx(&cli)?;
    match &cli.command {
        Command::Ingest(args) => cmd_ingest(&ctx, args),
        Command::Filter(args) => cmd_filter(&ctx, args),
        Command::Curate(args) => cmd_curate(&ctx, args),
        Command::Recaption(args) => cmd_recaption(&ctx, args),
        Command::Generate(args) => cmd_generate(&ctx, args),
        Command::Translate(args) => cmd_translate(&ctx, args),
        Command::Validate(args) => cmd_validate(&ctx, args),
        Command::Mix(args) => cmd_mix(&ctx, args),
        Command::Sweep(args) => cmd_sweep(&ctx, args),
        Command::Eval(args) => cmd_eval(&ctx, args),
        Command::Judge(args) => cmd_judge(&ctx, args),
        Command::Stats(args) => cmd_stats(&ctx, args),
        Command::Report(args) => cmd_report(&ctx, args),
    }
}

// ---------------------------------------------------------------------------
// Stage commands
// ---------------------------------------------------------------------------

fn cmd_ingest(ctx: &Ctx, args: &IngestArgs) -> Result<(), AppError> {
    let mut stream = ingest::RecordStream::open(&args.input, &ctx.fingerprint).map_err(data_err)?;
    let mut records = Vec::new();
    for item in &mut stream {
        records.push(item.map_err(data_err)?);
    }
    let snapshot = stream.manifest().clone();
    let read_manifest = match stream.finish() {
        Ok(manifest) => manifest,
        Err(e) => {
            // budget exceeded: no output, but the accounting is written
            write_manifest(&manifest_path(&args.out, None), &snapshot)?;
            return Err(data_err(e));
        }
    };

    let timeout = Duration::from_secs(ctx.config.ingest.probe_timeout_secs);
    let (records, probe_manifest) = if ctx.config.ingest.probe && !ctx.offline {
        let prober = ingest::HttpProber::new(timeout);
        ingest::check_accessibility(records, ProbeMode::Live(&prober), timeout, &ctx.fingerprint)
    } else {
        ingest::check_accessibility(records, ProbeMode::Offline, timeout, &ctx.fingerprint)
    };

    jsonl::write_all(&args.out, records.iter())?;
    write_manifest(&manifest_path(&args.out, Some("read")), &read_manifest)?;
    write_manifest(&manifest_path(&args.out, None), &probe_manifest)?;

    if let Some(shards) = args.shards {
        if shards == 0 {
            return Err(AppError::Config("--shards must be >= 1".into()));
        }
        let plan = ingest::shard(records.iter().map(|r| r.id.as_str()), shards);
        let path = args
            .shard_plan
            .clone()
            .unwrap_or_else(|| args.out.with_extension("shards.json"));
        write_json(&path, &plan)?;
    }
    Ok(())
}

fn cmd_filter(ctx: &Ctx, args: &FilterArgs) -> Result<(), AppError> {
    let records: Vec<SourceRecord> = jsonl::read_all(&args.input)?;
    let (records, heuristic_manifest) =
        filter::run_heuristic_stage(records, &ctx.config.filter, &ctx.fingerprint)
            .map_err(data_err)?;
    let (records, dedup_manifest) = filter::dedup(records, &ctx.fingerprint);
    let scorer = args
        .scores
        .as_ref()
        .map(filter::FixtureScorer::load)
        .transpose()
        .map_err(data_err)?;
    let (records, align_manifest) = filter::alignment_gate(
        records,
        scorer.as_ref().map(|s| s as &dyn filter::AlignmentScorer),
        ctx.config.filter.alignment_threshold,
        &ctx.fingerprint,
    )
    .map_err(data_err)?;

    jsonl::write_all(&args.out, records.iter())?;
    write_manifest(
        &manifest_path(&args.out, Some("heuristic")),
        &heuristic_manifest,
    )?;
    write_manifest(&manifest_path(&args.out, Some("dedup")), &dedup_manifest)?;
    write_manifest(&manifest_path(&args.out, None), &align_manifest)?;
    Ok(())
}

fn cmd_curate(ctx: &Ctx, args: &CurateArgs) -> Result<(), AppError> {
    let records: Vec<SourceRecord> = jsonl::read_all(&args.input)?;
    let client = ctx.client()?;

    // resume from persisted verdicts
    let mut verdicts: BTreeMap<String, CurationVerdict> = BTreeMap::new();
    if args.verdicts.exists() {
        let existing: Vec<VerdictRecord> = jsonl::read_all(&args.verdicts)?;
        for v in existing {
            verdicts.insert(v.id, v.verdict);
        }
    }

    let pending: Vec<&SourceRecord> = records
        .iter()
        .filter(|r| !verdicts.contains_key(&r.id))
        .collect();
    let scored: Vec<(String, Result<CurationVerdict, String>)> = pending
        .par_iter()
        .map(|record| {
            let request = curate::build_scoring_prompt(record, ctx.model());
            let outcome = client
                .complete(&request)
                .map_err(|e| e.to_string())
                .and_then(|text| curate::parse_verdict(&text).map_err(|e| e.to_string()));
            (record.id.clone(), outcome)
        })
        .collect();
    for (id, outcome) in scored {
        match outcome {
            Ok(verdict) => {
                verdicts.insert(id, verdict);
            }
            Err(message) => eprintln!("scoring failed for {id}: {message}"),
        }
    }

    // persist verdicts in input order for byte-stable re-runs
    let verdict_lines: Vec<VerdictRecord> = records
        .iter()
        .filter_map(|r| {
            verdicts.get(&r.id).map(|v| VerdictRecord {
                id: r.id.clone(),
                verdict: v.clone(),
            })
        })
        .collect();
    jsonl::write_all(&args.verdicts, verdict_lines.iter())?;

    let mut scoring_manifest = StageManifest::new("curate_scoring", &ctx.fingerprint);
    let mut scorable = Vec::with_capacity(records.len());
    for record in records {
        if verdicts.contains_key(&record.id) {
            scoring_manifest.record_kept();
            scorable.push(record);
        } else {
            scoring_manifest.record_drop("VerdictUnavailable");
        }
    }
    write_manifest(&manifest_path(&args.verdicts, None), &scoring_manifest)?;

    let (records, policy_manifest) =
        curate::apply_policy(scorable, &verdicts, &ctx.fingerprint).map_err(data_err)?;
    let balance = curate::BalanceConfig {
        max_subject_share: ctx.config.curate.max_subject_share,
        seed: ctx.seed(),
    };
    let (records, balance_manifest) =
        curate::balance_subjects(records, &verdicts, &balance, &ctx.fingerprint)
            .map_err(data_err)?;

    jsonl::write_all(&args.out, records.iter())?;
    write_manifest(&manifest_path(&args.out, Some("policy")), &policy_manifest)?;
    write_manifest(&manifest_path(&args.out, None), &balance_manifest)?;
    Ok(())
}

fn load_verdict_map(path: &Path) -> Result<BTreeMap<String, CurationVerdict>, AppError> {
    let lines: Vec<VerdictRecord> = jsonl::read_all(path)?;
    Ok(lines.into_iter().map(|v| (v.id, v.verdict)).collect())
}

fn cmd_recaption(ctx: &Ctx, args: &RecaptionArgs) -> Result<(), AppError> {
    let records: Vec<SourceRecord> = jsonl::read_all(&args.input)?;
    let verdicts = load_verdict_map(&args.verdicts)?;
    let map = match &ctx.config.generate.country_language_overrides {
        Some(path) => CountryLanguageMap::with_overrides(path)?,
        None => CountryLanguageMap::default(),
    };
    let client = ctx.client()?;
    let seed = ctx.seed();

    let outcomes: Vec<Result<(Caption, bool), String>> = records
        .par_iter()
        .map(|record| {
            let verdict = verdicts
                .get(&record.id)
                .ok_or_else(|| format!("no verdict for record {:?}", record.id))?;
            generate::recaption(record, verdict, &map, &client, seed, ctx.model())
                .map_err(|e| e.to_string())
        })
        .collect();

    let mut manifest = StageManifest::new("recaption", &ctx.fingerprint);
    let mut captions = Vec::with_capacity(records.len());
    for outcome in outcomes {
        match outcome {
            Ok((caption, was_mapped)) => {
                manifest.record_kept();
                if !was_mapped {
                    manifest.note(generate::NOTE_DEFAULT_LANGUAGE);
                }
                captions.push(caption);
            }
            Err(message) => {
                eprintln!("recaption failed: {message}");
                manifest.record_drop(generate::DROP_EMPTY_CAPTION);
            }
        }
    }
    jsonl::write_all(&args.out, captions.iter())?;
    write_manifest(&manifest_path(&args.out, None), &manifest)?;
    Ok(())
}

fn cmd_generate(ctx: &Ctx, args: &GenerateArgs) -> Result<(), AppError> {
    let captions: Vec<Caption> = jsonl::read_all(&args.captions)?;
    let records: Vec<SourceRecord> = jsonl::read_all(&args.records)?;
    let image_by_id: BTreeMap<&str, &str> = records
        .iter()
        .map(|r| (r.id.as_str(), r.image_uri.as_str()))
        .collect();
    let client = ctx.client()?;

    let outcomes: Vec<Result<(Vec<InstructionSample>, generate::GenerationNotes), String>> =
        captions
            .par_iter()
            .map(|caption| {
                let image_uri = image_by_id
                    .get(caption.id.as_str())
                    .ok_or_else(|| format!("caption {:?} has no source record", caption.id))?;
                let request = generate::build_instruction_prompt(caption, ctx.model());
                let text = client.complete(&request).map_err(|e| e.to_string())?;
                generate::parse_generated(&text, caption, image_uri).map_err(|e| e.to_string())
            })
            .collect();

    let mut manifest = StageManifest::new("generate", &ctx.fingerprint);
    let mut samples = Vec::new();
    for outcome in outcomes {
        match outcome {
            Ok((mut generated, notes)) => {
                manifest.record_kept();
                manifest.note_n(generate::NOTE_TRUNCATED, notes.truncated as u64);
                manifest.note_n("DroppedInvalid", notes.dropped_invalid as u64);
                samples.append(&mut generated);
            }
            Err(message) => {
                eprintln!("generation failed: {message}");
                manifest.record_drop(generate::DROP_UNPARSEABLE);
            }
        }
    }
    manifest.note_n("SamplesEmitted", samples.len() as u64);
    for sample in &samples {
        debug_assert!(validate_sample(sample).is_empty());
    }
    jsonl::write_all(&args.out, samples.iter())?;
    write_manifest(&manifest_path(&args.out, None), &manifest)?;
    Ok(())
}

fn cmd_translate(ctx: &Ctx, args: &TranslateArgs) -> Result<(), AppError> {
    let target = LangTag::new(&args.target).map_err(|e| AppError::Config(e.to_string()))?;
    let samples: Vec<InstructionSample> = jsonl::read_all(&args.input)?;
    let client = ctx.client()?;

    let outcomes: Vec<Result<EnforceOutcome, String>> = samples
        .par_iter()
        .map(|sample| {
            if !sample.language.is_english() {
                return Err(format!("sample {} is not English", sample.id));
            }
            let translated = translate::translate_sample(sample, &target, &client, ctx.model())
                .map_err(|e| e.to_string())?;
            Ok(translate::enforce(
                sample,
                translated,
                translate::EnforcePolicy::default(),
            ))
        })
        .collect();

    let mut manifest = StageManifest::new("translate", &ctx.fingerprint);
    let mut kept = Vec::new();
    for (sample, outcome) in samples.iter().zip(outcomes) {
        match outcome {
            Ok(EnforceOutcome::Keep(translated)) => {
                manifest.record_kept();
                kept.push(TranslatedRecord {
                    source_id: sample.id.clone(),
                    source_lang: sample.language.as_str().to_string(),
                    target_lang: target.as_str().to_string(),
                    validator_version: translate::VALIDATOR_VERSION.to_string(),
                    sample: translated,
                });
            }
            Ok(EnforceOutcome::Drop(violations)) => {
                let code = violations
                    .first()
                    .map(|v| v.code.as_str())
                    .unwrap_or("Unknown");
                manifest.record_drop(code);
            }
            Err(_) => manifest.record_drop("NotEnglish"),
        }
    }
    jsonl::write_all(&args.out, kept.iter())?;
    write_manifest(&manifest_path(&args.out, None), &manifest)?;
    Ok(())
}

/// A translated file line: with provenance fields, or a bare sample.
#[derive(Deserialize)]
#[serde(untagged)]
enum TransLine {
    Translated(TranslatedRecord),
    Plain(InstructionSample),
}

fn cmd_validate(ctx: &Ctx, args: &ValidateArgs) -> Result<(), AppError> {
    let originals: Vec<InstructionSample> = jsonl::read_all(&args.orig)?;
    let by_id: BTreeMap<&str, &InstructionSample> =
        originals.iter().map(|s| (s.id.as_str(), s)).collect();
    let lines: Vec<TransLine> = jsonl::read_all(&args.trans)?;

    let mut manifest = StageManifest::new("validate_translation", &ctx.fingerprint);
    let mut any_violation = false;
    for line in &lines {
        let (source_id, sample) = match line {
            TransLine::Translated(t) => (t.source_id.as_str(), &t.sample),
            TransLine::Plain(s) => (s.id.as_str(), s),
        };
        let Some(original) = by_id.get(source_id) else {
            manifest.record_drop("NoSource");
            any_violation = true;
            continue;
        };
        let violations = translate::validate_translation(original, sample);
        if violations.is_empty() {
            manifest.record_kept();
        } else {
            any_violation = true;
            manifest.record_drop(violations[0].code.as_str());
            for violation in &violations {
                manifest.note(violation.code.as_str());
            }
        }
    }
    let path = args
        .out
        .clone()
        .unwrap_or_else(|| manifest_path(&args.trans, Some("validate")));
    write_manifest(&path, &manifest)?;
    println!(
        "{}",
        serde_json::to_string_pretty(&manifest).expect("manifest serializes")
    );
    if any_violation {
        return Err(AppError::Data(format!(
            "{} of {} pairs violate translation structure",
            manifest.dropped_total(),
            manifest.input_count
        )));
    }
    Ok(())
}

fn cmd_mix(ctx: &Ctx, args: &MixArgs) -> Result<(), AppError> {
    let samples: Vec<InstructionSample> = jsonl::read_all(&args.input)?;
    let mut pool: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for sample in &samples {
        pool.entry(sample.language.as_str().to_string())
            .or_default()
            .push(sample.id.clone());
    }
    let language_weights: BTreeMap<String, f64> = match args.weights {
        WeightsArg::Uniform => pool
            .keys()
            .filter(|l| l.as_str() != mix::ENGLISH_TAG)
            .map(|l| (l.clone(), 1.0))
            .collect(),
        WeightsArg::Reference => mix::reference_weights(),
    };
    let spec = mix::MixSpec {
        total_n: args.total,
        english_fraction: args.english_fraction,
        language_weights,
        seed: ctx.seed(),
    };
    let plan = mix::plan_mixture(&spec).map_err(data_err)?;
    let (ids, manifest) =
        mix::sample_manifest(&pool, &plan, ctx.seed(), &ctx.fingerprint).map_err(data_err)?;
    std::fs::write(&args.out, ids.join("\n") + "\n")?;
    write_manifest(&manifest_path(&args.out, None), &manifest)?;
    if let Some(plan_out) = &args.plan_out {
        write_json(plan_out, &plan)?;
    }
    Ok(())
}

fn cmd_sweep(ctx: &Ctx, args: &SweepArgs) -> Result<(), AppError> {
    let ratios: Vec<f64> = if args.ratios.trim().is_empty() {
        Vec::new()
    } else {
        args.ratios
            .split(',')
            .map(|r| {
                r.trim()
                    .parse::<f64>()
                    .map_err(|e| AppError::Config(format!("bad ratio {r:?}: {e}")))
            })
            .collect::<Result<_, _>>()?
    };
    let plans =
        mix::plan_ratio_sweep(args.total, &ratios, args.k_langs, ctx.seed()).map_err(data_err)?;
    std::fs::create_dir_all(&args.out_dir)?;
    let mut summary = Vec::new();
    for (spec, plan) in &plans {
        let name = format!(
            "plan_en{:03}.json",
            (spec.english_fraction * 100.0).round() as u32
        );
        write_json(&args.out_dir.join(&name), plan)?;
        summary.push(serde_json::json!({
            "english_fraction": spec.english_fraction,
            "total_n": spec.total_n,
            "plan_file": name,
        }));
    }
    write_json(&args.out_dir.join("sweep.json"), &summary)?;
    Ok(())
}

#[derive(Deserialize)]
struct McBenchLine {
    #[allow(dead_code)]
    question: String,
    options: Vec<String>,
    answer: String,
    #[allow(dead_code)]
    #[serde(default)]
    image: Option<String>,
    language: String,
}

#[derive(Deserialize)]
struct ShortBenchLine {
    #[allow(dead_code)]
    #[serde(default)]
    question: Option<String>,
    answer: String,
    language: String,
}

#[derive(Deserialize)]
struct TextBenchLine {
    #[allow(dead_code)]
    #[serde(default)]
    source: Option<String>,
    reference: String,
    language: String,
}

fn mean_by_language(pairs: Vec<(String, f64)>) -> BTreeMap<String, f64> {
    let mut sums: BTreeMap<String, (f64, u64)> = BTreeMap::new();
    for (language, value) in pairs {
        let entry = sums.entry(language).or_insert((0.0, 0));
        entry.0 += value;
        entry.1 += 1;
    }
    sums.into_iter()
        .map(|(l, (s, n))| (l, s / n as f64))
        .collect()
}

fn check_lengths(bench: usize, pred: usize) -> Result<(), AppError> {
    if bench != pred {
        return Err(AppError::Data(format!(
            "benchmark has {bench} items but predictions file has {pred}"
        )));
    }
    Ok(())
}

fn cmd_eval(_ctx: &Ctx, args: &EvalArgs) -> Result<(), AppError> {
    let predictions = read_predictions(&args.pred)?;
    let pairs: Vec<(String, f64)> = match args.task {
        EvalTask::Mc => {
            let bench: Vec<McBenchLine> = jsonl::read_all(&args.bench)?;
            check_lengths(bench.len(), predictions.len())?;
            bench
                .iter()
                .zip(&predictions)
                .map(|(item, pred)| {
                    let gold =
                        item.answer.trim().chars().next().ok_or_else(|| {
                            AppError::Data("empty answer label in benchmark".into())
                        })?;
                    Ok((
                        item.language.clone(),
                        f64::from(eval::mc_accuracy(pred, &item.options, gold)) * 100.0,
                    ))
                })
                .collect::<Result<_, AppError>>()?
        }
        EvalTask::Short => {
            let bench: Vec<ShortBenchLine> = jsonl::read_all(&args.bench)?;
            check_lengths(bench.len(), predictions.len())?;
            bench
                .iter()
                .zip(&predictions)
                .map(|(item, pred)| {
                    (
                        item.language.clone(),
                        f64::from(eval::short_answer_match(pred, &item.answer)) * 100.0,
                    )
                })
                .collect()
        }
        EvalTask::Rouge => {
            let bench: Vec<TextBenchLine> = jsonl::read_all(&args.bench)?;
            check_lengths(bench.len(), predictions.len())?;
            bench
                .iter()
                .zip(&predictions)
                .map(|(item, pred)| {
                    (
                        item.language.clone(),
                        eval::rouge_l(pred, &item.reference) * 100.0,
                    )
                })
                .collect()
        }
        EvalTask::Chrf => {
            let bench: Vec<TextBenchLine> = jsonl::read_all(&args.bench)?;
            check_lengths(bench.len(), predictions.len())?;
            bench
                .iter()
                .zip(&predictions)
                .map(|(item, pred)| (item.language.clone(), eval::chrf(pred, &item.reference)))
                .collect()
        }
    };
    let by_language = mean_by_language(pairs);
    let mut scores: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    scores.insert(args.name.clone(), by_language);
    write_json(&args.out, &scores)?;
    Ok(())
}

#[derive(Serialize)]
struct JudgedLine {
    index: usize,
    language: String,
    raw: u8,
    normalized: u8,
    language_ok: bool,
    detected_language: String,
    feedback: String,
}

fn cmd_judge(ctx: &Ctx, args: &JudgeArgs) -> Result<(), AppError> {
    let instances: Vec<RubricInstance> = jsonl::read_all(&args.bench)?;
    let predictions = read_predictions(&args.pred)?;
    check_lengths(instances.len(), predictions.len())?;
    let client = ctx.client()?;
    let detector = babelkit::langid::builtin();

    let results: Vec<Result<eval::JudgeResult, String>> = instances
        .par_iter()
        .zip(&predictions)
        .map(|(instance, response)| {
            eval::judge(instance, response, &client, detector, ctx.model())
                .map_err(|e| e.to_string())
        })
        .collect();

    let mut lines = Vec::with_capacity(results.len());
    let mut score_pairs = Vec::new();
    for (i, (instance, result)) in instances.iter().zip(results).enumerate() {
        let result = result.map_err(AppError::Data)?;
        score_pairs.push((
            instance.language.as_str().to_string(),
            f64::from(result.normalized),
        ));
        lines.push(JudgedLine {
            index: i,
            language: instance.language.as_str().to_string(),
            raw: result.raw,
            normalized: result.normalized,
            language_ok: result.language_ok,
            detected_language: result.detected_language,
            feedback: result.feedback,
        });
    }
    jsonl::write_all(&args.out, lines.iter())?;
    if let (Some(name), Some(path)) = (&args.name, &args.scores_out) {
        let mut scores: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
        scores.insert(name.clone(), mean_by_language(score_pairs));
        write_json(path, &scores)?;
    }
    Ok(())
}

fn cmd_stats(_ctx: &Ctx, args: &StatsArgs) -> Result<(), AppError> {
    let samples: Vec<InstructionSample> = jsonl::read_all(&args.input)?;
    let stats = mix::corpus_stats(samples.iter().map(|s| s.language.as_str().to_string()));
    print!("{}", stats.render_table());
    if let Some(out) = &args.out {
        write_json(out, &stats)?;
    }
    Ok(())
}

fn cmd_report(_ctx: &Ctx, args: &ReportArgs) -> Result<(), AppError> {
    let raw = std::fs::read_to_string(&args.scores)?;
    let scores: BTreeMap<String, BTreeMap<String, f64>> =
        serde_json::from_str(&raw).map_err(data_err)?;
    let report = eval::aggregate(&scores, "en");
    print!("{}", report.render_table());
    write_json(&args.out, &report)?;
    if let Some(path) = &args.table_out {
        std::fs::write(path, report.render_table())?;
    }
    Ok(())
}
