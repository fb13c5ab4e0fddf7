//! `budgetrag`: run the budget-capped retrieval pipeline stage by stage.
//!
//! Every stage writes its artifact(s) plus `<out>.manifest.json`, prints a
//! one-line JSON summary on stdout, and on failure prints a JSON error on
//! stderr and exits 1 (usage), 2 (data) or 3 (remote service).

mod commands;
mod config;
mod error;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use budgetrag_core::classifier::ClassifierKind;
use budgetrag_core::embedding::EmbedderKind;
use budgetrag_core::retrieval::Mode;
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::Overrides;
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "budgetrag", version, about = "Budget-capped retrieval pipeline for long clinical records")]
struct Cli {
    /// Log more (-v info, -vv debug). Logs go to stderr.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a seeded synthetic corpus.
    Synth(SynthArgs),
    /// Filter, window and chunk a raw corpus.
    Ingest(IngestArgs),
    /// Embed every chunk into an index file.
    BuildIndex(BuildIndexArgs),
    /// Assemble one context per patient (RAG or LONG).
    Retrieve(RetrieveArgs),
    /// Classify contexts into outcomes.
    Classify(ClassifyArgs),
    /// Metrics JSON and ROC CSV for one outcomes file.
    Evaluate(EvaluateArgs),
    /// DeLong paired test between two outcomes files.
    Delong(DelongArgs),
    /// Usage summary and linear cost/runtime projections.
    Project(ProjectArgs),
    /// ROC overlay SVG and Markdown summary.
    Report(ReportArgs),
    /// Every stage, both modes, into one directory.
    Pipeline(PipelineArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ModeArg {
    Rag,
    Long,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Rag => Mode::Rag,
            ModeArg::Long => Mode::Long,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum EmbedderArg {
    Hashing,
    Remote,
}

impl From<EmbedderArg> for EmbedderKind {
    fn from(e: EmbedderArg) -> Self {
        match e {
            EmbedderArg::Hashing => EmbedderKind::Hashing,
            EmbedderArg::Remote => EmbedderKind::Remote,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ClassifierArg {
    Mock,
    Remote,
}

impl From<ClassifierArg> for ClassifierKind {
    fn from(c: ClassifierArg) -> Self {
        match c {
            ClassifierArg::Mock => ClassifierKind::Mock,
            ClassifierArg::Remote => ClassifierKind::Remote,
        }
    }
}

#[derive(Clone, Debug, Default, Args)]
pub struct Common {
    /// JSON config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Omit timestamps and latencies so reruns are byte-identical.
    #[arg(long)]
    pub deterministic: bool,
}

#[derive(Clone, Debug, Args)]
pub struct EmbedFlags {
    #[arg(long, value_enum)]
    pub embedder: Option<EmbedderArg>,
    /// Embeddings endpoint (remote embedder).
    #[arg(long)]
    pub endpoint: Option<String>,
    /// Embedding model name (remote embedder).
    #[arg(long)]
    pub model: Option<String>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 60)]
    pub patients: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value_t = 6000)]
    pub words_per_patient: usize,
    #[arg(long, default_value_t = 0.45)]
    pub positive_fraction: f64,
    /// Also write the planted sentences per patient here.
    #[arg(long)]
    pub planted: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Raw corpus JSONL.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Note-type whitelist, one type per line.
    #[arg(long)]
    pub whitelist: Option<PathBuf>,
    #[arg(long)]
    pub window_days: Option<u32>,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct BuildIndexArgs {
    /// Ingested (chunked) corpus.
    #[arg(long)]
    pub corpus: PathBuf,
    #[command(flatten)]
    pub embed: EmbedFlags,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct RetrieveArgs {
    /// Ingested (chunked) corpus.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Index file; required for RAG mode.
    #[arg(long)]
    pub index: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub mode: ModeArg,
    #[arg(long)]
    pub budget_words: Option<usize>,
    #[arg(long)]
    pub window_days: Option<u32>,
    /// Retrieval query text.
    #[arg(long)]
    pub query: Option<String>,
    #[command(flatten)]
    pub embed: EmbedFlags,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    #[arg(long)]
    pub contexts: PathBuf,
    #[arg(long, value_enum)]
    pub classifier: Option<ClassifierArg>,
    /// Chat-completions endpoint (remote classifier).
    #[arg(long)]
    pub endpoint: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub parallelism: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub outcomes: PathBuf,
    /// Corpus whose labels replace the labels carried in the outcomes.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct DelongArgs {
    /// Exactly two outcomes files, given as `--outcomes A --outcomes B`.
    #[arg(long, required = true)]
    pub outcomes: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct ProjectArgs {
    /// LONG and RAG outcomes files; their prompt sizes set the usage
    /// summary and the per-patient token rates.
    #[arg(long)]
    pub outcomes: Vec<PathBuf>,
    /// Tokens per patient when no outcomes are given.
    #[arg(long)]
    pub per_patient_tokens: Option<f64>,
    #[arg(long)]
    pub price_per_million: Option<f64>,
    #[arg(long)]
    pub seconds_rag: Option<f64>,
    #[arg(long)]
    pub seconds_long: Option<f64>,
    #[arg(long, default_value_t = 100_000)]
    pub max_patients: u64,
    #[arg(long, default_value_t = 10_000)]
    pub step: u64,
    /// Path prefix for the CSV and JSON outputs.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Metrics files from `evaluate`.
    #[arg(long, required = true)]
    pub metrics: Vec<PathBuf>,
    /// ROC CSVs, one per metrics file; defaults to `<metrics>.roc.csv`.
    #[arg(long)]
    pub series: Vec<PathBuf>,
    #[arg(long)]
    pub delong: Option<PathBuf>,
    #[arg(long)]
    pub usage: Option<PathBuf>,
    #[arg(long, default_value = "ROC: RAG vs long context")]
    pub title: String,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    /// Raw corpus JSONL.
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub whitelist: Option<PathBuf>,
    #[arg(long)]
    pub window_days: Option<u32>,
    #[arg(long)]
    pub budget_words: Option<usize>,
    #[arg(long)]
    pub query: Option<String>,
    #[arg(long, value_enum)]
    pub embedder: Option<EmbedderArg>,
    #[arg(long)]
    pub embed_endpoint: Option<String>,
    #[arg(long)]
    pub embed_model: Option<String>,
    #[arg(long, value_enum)]
    pub classifier: Option<ClassifierArg>,
    /// Chat-completions endpoint (remote classifier).
    #[arg(long)]
    pub endpoint: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub parallelism: Option<usize>,
    #[arg(long)]
    pub price_per_million: Option<f64>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub common: Common,
}

impl EmbedFlags {
    fn overrides(&self) -> Overrides {
        Overrides {
            embedder: self.embedder.map(Into::into),
            embed_endpoint: self.endpoint.clone(),
            embed_model: self.model.clone(),
            ..Default::default()
        }
    }
}

fn run(cli: Cli) -> Result<serde_json::Value, CliError> {
    match cli.command {
        Command::Synth(a) => commands::synth(&a),
        Command::Ingest(a) => {
            let o = Overrides { window_days: a.window_days, ..Default::default() };
            commands::ingest(&commands::Ctx::new(&a.common, &o)?, &a.corpus, a.whitelist.as_deref(), &a.out)
        }
        Command::BuildIndex(a) => {
            commands::build_index(&commands::Ctx::new(&a.common, &a.embed.overrides())?, &a.corpus, &a.out)
        }
        Command::Retrieve(a) => {
            let o = Overrides {
                budget_words: a.budget_words,
                window_days: a.window_days,
                query: a.query.clone(),
                ..a.embed.overrides()
            };
            commands::retrieve(
                &commands::Ctx::new(&a.common, &o)?,
                &a.corpus,
                a.index.as_deref(),
                a.mode.into(),
                &a.out,
            )
        }
        Command::Classify(a) => {
            let o = Overrides {
                classifier: a.classifier.map(Into::into),
                classify_endpoint: a.endpoint.clone(),
                classify_model: a.model.clone(),
                parallelism: a.parallelism,
                ..Default::default()
            };
            commands::classify(&commands::Ctx::new(&a.common, &o)?, &a.contexts, &a.out)
        }
        Command::Evaluate(a) => commands::evaluate(
            &commands::Ctx::new(&a.common, &Overrides::default())?,
            &a.outcomes,
            a.corpus.as_deref(),
            &a.out,
        ),
        Command::Delong(a) => {
            let [x, y] = a.outcomes.as_slice() else {
                return Err(CliError::Usage(format!("delong needs exactly two --outcomes, got {}", a.outcomes.len())));
            };
            commands::delong(&commands::Ctx::new(&a.common, &Overrides::default())?, x, y, &a.out)
        }
        Command::Project(a) => {
            let o = Overrides { price_per_million: a.price_per_million, ..Default::default() };
            let mut ctx = commands::Ctx::new(&a.common, &o)?;
            if let Some(s) = a.seconds_rag {
                ctx.cfg.prices.seconds_per_patient_rag = s;
            }
            if let Some(s) = a.seconds_long {
                ctx.cfg.prices.seconds_per_patient_long = s;
            }
            let spec = commands::ProjectSpec {
                outcomes: &a.outcomes,
                per_patient_tokens: a.per_patient_tokens,
                max_patients: a.max_patients,
                step: a.step,
            };
            commands::project(&ctx, &spec, &a.out)
        }
        Command::Report(a) => {
            let ctx = commands::Ctx::new(&a.common, &Overrides::default())?;
            let spec = commands::ReportSpec {
                metrics: &a.metrics,
                series: &a.series,
                delong: a.delong.as_deref(),
                usage: a.usage.as_deref(),
                title: &a.title,
            };
            commands::report(&ctx, &spec, &a.out)
        }
        Command::Pipeline(a) => {
            let o = Overrides {
                window_days: a.window_days,
                budget_words: a.budget_words,
                query: a.query.clone(),
                embedder: a.embedder.map(Into::into),
                embed_endpoint: a.embed_endpoint.clone(),
                embed_model: a.embed_model.clone(),
                classifier: a.classifier.map(Into::into),
                classify_endpoint: a.endpoint.clone(),
                classify_model: a.model.clone(),
                parallelism: a.parallelism,
                price_per_million: a.price_per_million,
            };
            commands::pipeline(&commands::Ctx::new(&a.common, &o)?, &a.corpus, a.whitelist.as_deref(), &a.out)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = CliError::Usage(e.render().to_string().trim().to_string());
            eprintln!("{}", err.to_json());
            return ExitCode::from(err.exit_code() as u8);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match run(cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("{}", err.to_json());
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
