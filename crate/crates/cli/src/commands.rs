//! One function per pipeline stage. Each validates its inputs against their
//! manifests, writes its artifacts, writes one manifest and returns a JSON
//! summary for stdout.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use budgetrag_core::classifier::{ClassificationOutcome, Classifier, ClassifierKind};
use budgetrag_core::corpus::{self, ChunkedRecord, NoteWhitelist};
use budgetrag_core::costmodel::{self, PriceSheet, UsageSummary};
use budgetrag_core::embedding::build_embedder;
use budgetrag_core::jsonl::{read_jsonl, write_jsonl};
use budgetrag_core::metrics::{self, DeLongResult, MetricBundle, ScoredCohort};
use budgetrag_core::report::{self, RocSeries};
use budgetrag_core::retrieval::{self, AssembledContext, Mode};
use budgetrag_core::synth::{self, SynthConfig};
use budgetrag_core::vindex::VectorIndex;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::{Overrides, PipelineConfig};
use crate::error::{CliError, CliResult};
use crate::manifest::{check_listed, manifest_path, sha256_file, RunManifest};
use crate::{Common, SynthArgs};

pub struct Ctx {
    pub cfg: PipelineConfig,
    pub deterministic: bool,
}

impl Ctx {
    pub fn new(common: &Common, overrides: &Overrides) -> CliResult<Self> {
        Ok(Ctx {
            cfg: PipelineConfig::resolve(common.config.as_deref(), overrides)?,
            deterministic: common.deterministic,
        })
    }

    fn manifest(&self, command: &str) -> RunManifest {
        RunManifest::begin(command, self.cfg.snapshot(), self.deterministic)
    }
}

/// `path` with its extension replaced by `ext`.
fn sibling(path: &Path, ext: &str) -> PathBuf {
    path.with_extension(ext)
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn write_file(path: &Path, text: &str) -> CliResult<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::data("io", format!("{}: {e}", parent.display())))?;
    }
    fs::write(path, text).map_err(|e| CliError::data("io", format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_file(path, &text)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::data("io", format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::data("json", format!("{}: {e}", path.display())))
}

fn ensure_parent(path: &Path) -> CliResult<()> {
    match path.parent().filter(|p| !p.as_os_str().is_empty()) {
        Some(parent) => {
            fs::create_dir_all(parent).map_err(|e| CliError::data("io", format!("{}: {e}", parent.display())))
        }
        None => Ok(()),
    }
}

pub fn synth(a: &SynthArgs) -> CliResult<Value> {
    if !(0.0..=1.0).contains(&a.positive_fraction) {
        return Err(CliError::Usage("--positive-fraction must lie in [0, 1]".into()));
    }
    let cfg = SynthConfig {
        patients: a.patients,
        seed: a.seed,
        words_per_patient: a.words_per_patient,
        positive_fraction: a.positive_fraction,
        ..SynthConfig::default()
    };
    let patients = synth::generate(&cfg);
    ensure_parent(&a.out)?;
    write_jsonl(&a.out, patients.iter().map(|p| &p.record))?;
    let mut m = RunManifest::begin("synth", serde_json::to_value(&cfg)?, a.common.deterministic);
    m.output("corpus", &a.out)?;
    if let Some(path) = &a.planted {
        ensure_parent(path)?;
        let rows: Vec<Value> =
            patients.iter().map(|p| json!({ "patient_id": p.record.patient_id, "planted": p.planted })).collect();
        write_jsonl(path, &rows)?;
        m.output("planted", path)?;
    }
    m.finish(&a.out)?;
    let positives = patients.iter().filter(|p| p.record.label == 1).count();
    Ok(json!({ "command": "synth", "patients": patients.len(), "positives": positives, "out": a.out }))
}

pub fn ingest(ctx: &Ctx, corpus_path: &Path, whitelist: Option<&Path>, out: &Path) -> CliResult<Value> {
    let mut m = ctx.manifest("ingest");
    let sha = m.input("corpus", corpus_path)?;
    m.corpus_fingerprint = Some(sha);
    let wl = match (whitelist, &ctx.cfg.note_types) {
        (Some(path), _) => {
            m.input("whitelist", path)?;
            NoteWhitelist::load(path)?
        }
        (None, Some(types)) => NoteWhitelist::new(types),
        (None, None) => NoteWhitelist::default(),
    };
    let records = corpus::load_corpus(corpus_path, &wl)?;
    let chunked = corpus::prepare_corpus(records, ctx.cfg.window_days, ctx.cfg.chunk_words)?;
    ensure_parent(out)?;
    write_jsonl(out, &chunked)?;
    m.output("chunked_corpus", out)?;
    m.finish(out)?;

    let chunks: usize = chunked.iter().map(|r| r.chunks.len()).sum();
    let words: usize = chunked.iter().map(ChunkedRecord::total_words).sum();
    let empty = chunked.iter().filter(|r| r.chunks.is_empty()).count();
    Ok(
        json!({ "command": "ingest", "patients": chunked.len(), "chunks": chunks, "words": words, "empty_records": empty }),
    )
}

pub fn build_index(ctx: &Ctx, corpus_path: &Path, out: &Path) -> CliResult<Value> {
    let mut m = ctx.manifest("build-index");
    let sha = m.input("corpus", corpus_path)?;
    m.corpus_fingerprint = Some(sha);
    let records = corpus::load_chunked(corpus_path)?;
    let embedder = build_embedder(&ctx.cfg.embedder)?;
    let index = retrieval::build_index(&records, embedder.as_ref())?;
    ensure_parent(out)?;
    index.save(out)?;
    m.embedder = Some(embedder.fingerprint());
    m.output("index", out)?;
    m.index_fingerprint = Some(sha256_file(out)?);
    m.finish(out)?;
    Ok(
        json!({ "command": "build-index", "vectors": index.len(), "dim": index.dim(), "embedder": embedder.fingerprint() }),
    )
}

/// The index must have been built from this very corpus file.
fn check_index_corpus(index_path: &Path, corpus_sha: &str) -> CliResult<()> {
    let mpath = manifest_path(index_path);
    if !mpath.exists() {
        return Ok(());
    }
    let im = RunManifest::load(&mpath)?;
    match im.input_sha("corpus") {
        Some(s) if s != corpus_sha => Err(CliError::data(
            "fingerprint_mismatch",
            format!("{} was built from a different corpus (sha256 {s})", index_path.display()),
        )),
        _ => Ok(()),
    }
}

pub fn retrieve(ctx: &Ctx, corpus_path: &Path, index_path: Option<&Path>, mode: Mode, out: &Path) -> CliResult<Value> {
    let mut m = ctx.manifest("retrieve");
    let corpus_sha = m.input("corpus", corpus_path)?;
    m.corpus_fingerprint = Some(corpus_sha.clone());
    let records = corpus::load_chunked(corpus_path)?;

    let contexts: Vec<AssembledContext> = match mode {
        Mode::Long => records
            .iter()
            .map(|r| retrieval::assemble_long(&r.record, ctx.cfg.window_days))
            .collect::<Result<_, _>>()?,
        Mode::Rag => {
            let index_path = index_path.ok_or_else(|| CliError::Usage("--mode rag requires --index".into()))?;
            m.index_fingerprint = Some(m.input("index", index_path)?);
            check_index_corpus(index_path, &corpus_sha)?;
            let index = VectorIndex::load(index_path)?;
            let embedder = build_embedder(&ctx.cfg.embedder)?;
            retrieval::check_fingerprint(&index, embedder.as_ref())?;
            m.embedder = Some(embedder.fingerprint());
            ctx.cfg.retrieval.validate()?;
            let query = embedder.embed(&ctx.cfg.retrieval.query_text)?;
            records
                .iter()
                .map(|r| retrieval::assemble_rag_with_query(r, &index, &query, &ctx.cfg.retrieval))
                .collect::<Result<_, _>>()?
        }
    };
    ensure_parent(out)?;
    write_jsonl(out, &contexts)?;
    m.output("contexts", out)?;
    m.finish(out)?;

    let n = contexts.len().max(1) as f64;
    let total: usize = contexts.iter().map(|c| c.word_count).sum();
    let ratio: f64 = contexts.iter().map(|c| retrieval::context_stats(c).1).sum::<f64>() / n;
    Ok(json!({
        "command": "retrieve",
        "mode": mode,
        "patients": contexts.len(),
        "total_words": total,
        "mean_words": total as f64 / n,
        "mean_fraction_kept": ratio,
    }))
}

pub fn classify(ctx: &Ctx, contexts_path: &Path, out: &Path) -> CliResult<Value> {
    let mut m = ctx.manifest("classify");
    m.input("contexts", contexts_path)?;
    let contexts: Vec<AssembledContext> = read_jsonl(contexts_path)?;
    let classifier = Classifier::from_config(ctx.cfg.classifier.clone())?.deterministic(ctx.deterministic);
    let batch = classifier.classify_batch(&contexts, ctx.cfg.parallelism);

    let outcomes: Vec<&ClassificationOutcome> = batch.outcomes().collect();
    let failures: Vec<_> = batch.failures().collect();
    let failures_path = sibling(out, "failures.jsonl");
    ensure_parent(out)?;
    write_jsonl(out, outcomes.iter().copied())?;
    write_jsonl(&failures_path, failures.iter().copied())?;
    m.classifier = Some(classifier.identifier());
    m.config = json!({ "pipeline": ctx.cfg.snapshot(), "batch": batch.manifest });
    m.output("outcomes", out)?;
    m.output("failures", &failures_path)?;
    m.finish(out)?;

    if !contexts.is_empty() && outcomes.is_empty() {
        let first = failures.first().map(|f| f.error.as_str()).unwrap_or_default();
        let msg = format!("all {} classifications failed; first error: {first}", failures.len());
        return Err(match ctx.cfg.classifier.kind {
            ClassifierKind::Remote => CliError::Remote(msg),
            ClassifierKind::Mock => CliError::data("classification", msg),
        });
    }
    if !failures.is_empty() {
        log::warn!("{} of {} classifications failed, see {}", failures.len(), contexts.len(), failures_path.display());
    }
    let positives = outcomes.iter().filter(|o| o.label == 1).count();
    Ok(json!({
        "command": "classify",
        "classified": outcomes.len(),
        "failed": failures.len(),
        "predicted_positive": positives,
    }))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct MetricsFile {
    pub mode: Mode,
    pub metrics: MetricBundle,
}

#[derive(Deserialize)]
struct LabelRow {
    patient_id: String,
    label: u8,
}

fn single_mode(outcomes: &[ClassificationOutcome], path: &Path) -> CliResult<Mode> {
    let mode = outcomes
        .first()
        .map(|o| o.mode)
        .ok_or_else(|| CliError::data("empty", format!("{} holds no outcomes", path.display())))?;
    if outcomes.iter().any(|o| o.mode != mode) {
        return Err(CliError::data("mixed_modes", format!("{} mixes RAG and LONG outcomes", path.display())));
    }
    Ok(mode)
}

pub fn evaluate(ctx: &Ctx, outcomes_path: &Path, corpus_path: Option<&Path>, out: &Path) -> CliResult<Value> {
    let mut m = ctx.manifest("evaluate");
    m.input("outcomes", outcomes_path)?;
    let mut outcomes: Vec<ClassificationOutcome> = read_jsonl(outcomes_path)?;
    let mode = single_mode(&outcomes, outcomes_path)?;
    if let Some(path) = corpus_path {
        m.corpus_fingerprint = Some(m.input("labels", path)?);
        let labels: HashMap<String, u8> =
            read_jsonl::<LabelRow>(path)?.into_iter().map(|r| (r.patient_id, r.label)).collect();
        for o in &mut outcomes {
            let label = labels.get(&o.patient_id).ok_or_else(|| CliError::Data {
                kind: "missing_label",
                message: format!("patient {:?} is not in {}", o.patient_id, path.display()),
                patient_ids: vec![o.patient_id.clone()],
            })?;
            o.truth = Some(*label);
        }
    }
    let cohort = ScoredCohort::from_outcomes(&outcomes)?;
    let bundle = metrics::evaluate(&cohort, ctx.cfg.threshold)?;
    let roc = metrics::roc_points(&cohort)?;

    let roc_path = sibling(out, "roc.csv");
    write_json(out, &MetricsFile { mode, metrics: bundle.clone() })?;
    write_file(&roc_path, &report::roc_csv(&roc))?;
    m.output("metrics", out)?;
    m.output("roc", &roc_path)?;
    m.finish(out)?;
    Ok(json!({ "command": "evaluate", "mode": mode, "metrics": bundle }))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DeLongFile {
    pub mode_a: Mode,
    pub mode_b: Mode,
    pub patients: usize,
    #[serde(flatten)]
    pub result: DeLongResult,
}

fn load_cohort(
    m: &mut RunManifest,
    role: &str,
    path: &Path,
) -> CliResult<(Mode, ScoredCohort, Vec<ClassificationOutcome>)> {
    m.input(role, path)?;
    let outcomes: Vec<ClassificationOutcome> = read_jsonl(path)?;
    let mode = single_mode(&outcomes, path)?;
    Ok((mode, ScoredCohort::from_outcomes(&outcomes)?, outcomes))
}

pub fn delong(ctx: &Ctx, a: &Path, b: &Path, out: &Path) -> CliResult<Value> {
    let mut m = ctx.manifest("delong");
    let (mode_a, ca, _) = load_cohort(&mut m, "outcomes_a", a)?;
    let (mode_b, cb, _) = load_cohort(&mut m, "outcomes_b", b)?;
    let result = metrics::delong_test(&ca, &cb)?;
    let file = DeLongFile { mode_a, mode_b, patients: ca.len(), result };
    write_json(out, &file)?;
    m.output("delong", out)?;
    m.finish(out)?;
    Ok(json!({ "command": "delong", "result": file }))
}

pub struct ProjectSpec<'a> {
    pub outcomes: &'a [PathBuf],
    pub per_patient_tokens: Option<f64>,
    pub max_patients: u64,
    pub step: u64,
}

pub fn project(ctx: &Ctx, spec: &ProjectSpec<'_>, out: &Path) -> CliResult<Value> {
    let prices: &PriceSheet = &ctx.cfg.prices;
    prices.validate()?;
    if spec.step == 0 {
        return Err(CliError::Usage("--step must be positive".into()));
    }
    let mut m = ctx.manifest("project");
    let grid = costmodel::patient_grid(spec.max_patients, spec.step);
    ensure_parent(out)?;
    let mut summary = json!({ "command": "project" });

    match (spec.outcomes, spec.per_patient_tokens) {
        ([], Some(rate)) => {
            let path = with_suffix(out, ".cost.csv");
            write_file(&path, &costmodel::cost_csv(&costmodel::project_cost(rate, prices, &grid)))?;
            m.output("cost", &path)?;
        }
        ([x, y], None) => {
            let mut by_mode: HashMap<Mode, Vec<ClassificationOutcome>> = HashMap::new();
            for (role, path) in [("outcomes_a", x), ("outcomes_b", y)] {
                let (mode, _, outcomes) = load_cohort(&mut m, role, path)?;
                if by_mode.insert(mode, outcomes).is_some() {
                    return Err(CliError::Usage(format!(
                        "both --outcomes files are {mode}; give one LONG and one RAG"
                    )));
                }
            }
            let long = &by_mode[&Mode::Long];
            let rag = &by_mode[&Mode::Rag];
            let usage: UsageSummary = costmodel::summarize_usage(long, rag, prices)?;
            let n = usage.patients.max(1) as f64;
            for (name, total) in [("long", usage.total_words_long), ("rag", usage.total_words_rag)] {
                let path = with_suffix(out, &format!(".cost_{name}.csv"));
                write_file(&path, &costmodel::cost_csv(&costmodel::project_cost(total as f64 / n, prices, &grid)))?;
                m.output(&format!("cost_{name}"), &path)?;
            }
            let usage_path = with_suffix(out, ".usage.json");
            write_json(&usage_path, &usage)?;
            m.output("usage", &usage_path)?;
            summary["usage"] = serde_json::to_value(&usage)?;
        }
        _ => {
            return Err(CliError::Usage(
                "project needs either two --outcomes files (LONG and RAG) or --per-patient-tokens".into(),
            ))
        }
    }
    let time = costmodel::project_time(prices, &grid);
    let time_path = with_suffix(out, ".time.csv");
    write_file(&time_path, &costmodel::time_csv(&time.points))?;
    m.output("time", &time_path)?;
    m.finish(out)?;
    summary["latency_improvement"] = json!(time.improvement);
    Ok(summary)
}

pub struct ReportSpec<'a> {
    pub metrics: &'a [PathBuf],
    pub series: &'a [PathBuf],
    pub delong: Option<&'a Path>,
    pub usage: Option<&'a Path>,
    pub title: &'a str,
}

pub fn report(ctx: &Ctx, spec: &ReportSpec<'_>, out: &Path) -> CliResult<Value> {
    if !spec.series.is_empty() && spec.series.len() != spec.metrics.len() {
        return Err(CliError::Usage(format!(
            "got {} --series for {} --metrics; give one per metrics file or none",
            spec.series.len(),
            spec.metrics.len()
        )));
    }
    let mut m = ctx.manifest("report");
    let mut rows: Vec<(String, MetricBundle)> = Vec::new();
    let mut series = Vec::new();
    for (i, mpath) in spec.metrics.iter().enumerate() {
        m.input("metrics", mpath)?;
        let file: MetricsFile = read_json(mpath)?;
        let spath = spec.series.get(i).cloned().unwrap_or_else(|| sibling(mpath, "roc.csv"));
        let sha = m.input("roc", &spath)?;
        let mm = manifest_path(mpath);
        if mm.exists() {
            check_listed(&RunManifest::load(&mm)?, &spath, &sha, &mm)?;
        }
        let text = fs::read_to_string(&spath).map_err(|e| CliError::data("io", format!("{}: {e}", spath.display())))?;
        let mut label = file.mode.to_string();
        if rows.iter().any(|(l, _)| *l == label) {
            label = format!("{label} ({})", mpath.file_stem().unwrap_or_default().to_string_lossy());
        }
        series.push(RocSeries {
            label: label.clone(),
            points: report::parse_roc_csv(&text)?,
            auroc: file.metrics.auroc,
        });
        rows.push((label, file.metrics));
    }
    let delong: Option<DeLongFile> = match spec.delong {
        Some(p) => {
            m.input("delong", p)?;
            Some(read_json(p)?)
        }
        None => None,
    };
    let usage: Option<UsageSummary> = match spec.usage {
        Some(p) => {
            m.input("usage", p)?;
            Some(read_json(p)?)
        }
        None => None,
    };

    fs::create_dir_all(out).map_err(|e| CliError::data("io", format!("{}: {e}", out.display())))?;
    let svg_path = out.join("roc.svg");
    let md_path = out.join("summary.md");
    write_file(&svg_path, &report::roc_svg(&series, spec.title))?;
    write_file(&md_path, &report::summary_markdown(&rows, delong.as_ref().map(|d| &d.result), usage.as_ref()))?;
    m.output("roc_svg", &svg_path)?;
    m.output("summary", &md_path)?;
    m.finish(out)?;
    Ok(json!({ "command": "report", "svg": svg_path, "summary": md_path }))
}

/// Runs every stage for both modes into `dir`.
pub fn pipeline(ctx: &Ctx, raw_corpus: &Path, whitelist: Option<&Path>, dir: &Path) -> CliResult<Value> {
    fs::create_dir_all(dir).map_err(|e| CliError::data("io", format!("{}: {e}", dir.display())))?;
    let p = |name: &str| dir.join(name);
    let mut stages = Vec::new();

    stages.push(ingest(ctx, raw_corpus, whitelist, &p("corpus.chunked.jsonl"))?);
    stages.push(build_index(ctx, &p("corpus.chunked.jsonl"), &p("index.bin"))?);
    for (mode, tag) in [(Mode::Rag, "rag"), (Mode::Long, "long")] {
        let contexts = p(&format!("contexts_{tag}.jsonl"));
        let outcomes = p(&format!("outcomes_{tag}.jsonl"));
        stages.push(retrieve(ctx, &p("corpus.chunked.jsonl"), Some(&p("index.bin")), mode, &contexts)?);
        stages.push(classify(ctx, &contexts, &outcomes)?);
        stages.push(evaluate(ctx, &outcomes, None, &p(&format!("metrics_{tag}.json")))?);
    }
    stages.push(delong(ctx, &p("outcomes_rag.jsonl"), &p("outcomes_long.jsonl"), &p("delong.json"))?);
    let outcomes = [p("outcomes_long.jsonl"), p("outcomes_rag.jsonl")];
    let proj = ProjectSpec { outcomes: &outcomes, per_patient_tokens: None, max_patients: 100_000, step: 10_000 };
    stages.push(project(ctx, &proj, &p("projection"))?);
    let metrics = [p("metrics_rag.json"), p("metrics_long.json")];
    let rep = ReportSpec {
        metrics: &metrics,
        series: &[],
        delong: Some(&p("delong.json")),
        usage: Some(&p("projection.usage.json")),
        title: "ROC: RAG vs long context",
    };
    stages.push(report(ctx, &rep, &p("report"))?);
    Ok(json!({ "command": "pipeline", "out": dir, "stages": stages }))
}
