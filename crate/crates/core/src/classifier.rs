//! Binary complication classification of assembled contexts.
//!
//! A [`Responder`] turns a rendered prompt into raw model text: either a
//! chat-completions endpoint or the offline keyword mock. Every response then
//! goes through the same parser and score mapping.

use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::corpus::word_count;
use crate::http::{HttpClient, HttpError, RetryPolicy};
use crate::retrieval::{AssembledContext, Mode};

pub const CONTEXT_PLACEHOLDER: &str = "{context}";

pub const DEFAULT_PROMPT_TEMPLATE: &str = "You are a surgical quality reviewer. Read the clinical notes \
below and decide whether they document a post-operative complication.\n\
Answer with a single JSON object and nothing else: {\"complication\": 0 or 1, \"severity\": 1-5}, \
where severity rates clinical significance from 1 (none or trivial) to 5 (life-threatening).\n\n\
Notes:\n{context}";

pub const DEFAULT_KEYWORDS: &[&str] = &[
    "anastomotic leak",
    "reoperation",
    "return to the operating room",
    "surgical site infection",
    "wound dehiscence",
    "abscess",
    "sepsis",
    "septic shock",
    "hemorrhage",
    "pulmonary embolism",
    "deep vein thrombosis",
    "pneumonia",
    "reintubation",
    "myocardial infarction",
];

/// Severity assumed when a response omits it.
pub const DEFAULT_SEVERITY: u8 = 3;

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error("invalid classifier config: {0}")]
    Config(String),
    #[error("classifier service failed: {0}")]
    Transport(#[from] HttpError),
    #[error("chat response missing `{path}`")]
    Schema { path: String },
    #[error("cannot parse model response: {message}")]
    Parse { message: String, raw: String },
}

impl ClassifyError {
    pub fn raw_response(&self) -> Option<&str> {
        match self {
            ClassifyError::Parse { raw, .. } => Some(raw),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierKind {
    Remote,
    #[default]
    Mock,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierConfig {
    pub kind: ClassifierKind,
    pub endpoint: Option<String>,
    pub model_name: String,
    pub temperature: f64,
    /// Retries after the first attempt.
    pub max_retries: u32,
    pub prompt_template: String,
    /// Phrases the mock classifier looks for (case-insensitive).
    pub keywords: Vec<String>,
    pub timeout_secs: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            kind: ClassifierKind::Mock,
            endpoint: None,
            model_name: "mock-keyword".to_string(),
            temperature: 0.0,
            max_retries: 2,
            prompt_template: DEFAULT_PROMPT_TEMPLATE.to_string(),
            keywords: DEFAULT_KEYWORDS.iter().map(|s| s.to_string()).collect(),
            timeout_secs: 120,
        }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<(), ClassifyError> {
        if !self.prompt_template.contains(CONTEXT_PLACEHOLDER) {
            return Err(ClassifyError::Config(format!("prompt template lacks {CONTEXT_PLACEHOLDER}")));
        }
        if self.kind == ClassifierKind::Remote && (self.endpoint.is_none() || self.model_name.is_empty()) {
            return Err(ClassifyError::Config("remote classifier requires endpoint and model_name".into()));
        }
        Ok(())
    }

    pub fn retry_policy(&self) -> RetryPolicy {
        RetryPolicy { max_attempts: self.max_retries + 1, ..RetryPolicy::default() }
    }

    pub fn render_prompt(&self, context: &str) -> String {
        self.prompt_template.replace(CONTEXT_PLACEHOLDER, context)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassificationOutcome {
    pub patient_id: String,
    pub mode: Mode,
    pub label: u8,
    pub severity: u8,
    /// Rank score for ROC/PR analysis, see [`rank_score`].
    pub score: f64,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub severity_defaulted: bool,
    pub raw_response: String,
    pub prompt_words: usize,
    pub latency_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<u8>,
}

/// Maps (label, severity) to a score in [0, 1].
///
/// Positives land in [0.5, 0.9] rising with severity (0.4 + severity/10);
/// negatives land in [0, 0.4] as (1 - severity/5)/2. Every positive therefore
/// outranks every negative and is predicted positive at threshold 0.5.
pub fn rank_score(label: u8, severity: u8) -> f64 {
    let s = f64::from(severity);
    if label == 1 {
        0.4 + s / 10.0
    } else {
        (1.0 - s / 5.0) * 0.5
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParsedResponse {
    pub label: u8,
    pub severity: u8,
    pub severity_defaulted: bool,
}

/// Reads `complication` and `severity` from the first balanced JSON object
/// in `raw`, ignoring any surrounding prose or markdown fences.
pub fn parse_response(raw: &str) -> Result<ParsedResponse, ClassifyError> {
    let err = |message: &str| ClassifyError::Parse { message: message.to_string(), raw: raw.to_string() };
    let obj = first_json_object(raw).ok_or_else(|| err("no JSON object found"))?;
    let label = match obj.get("complication").and_then(Value::as_u64) {
        Some(l @ (0 | 1)) => l as u8,
        Some(_) => return Err(err("`complication` must be 0 or 1")),
        None => return Err(err("`complication` missing or not an integer")),
    };
    let (severity, severity_defaulted) = match obj.get("severity") {
        None | Some(Value::Null) => (DEFAULT_SEVERITY, true),
        Some(v) => match v.as_u64() {
            Some(s @ 1..=5) => (s as u8, false),
            _ => return Err(err("`severity` must be an integer from 1 to 5")),
        },
    };
    Ok(ParsedResponse { label, severity, severity_defaulted })
}

/// First `{...}` span with balanced braces (string-aware) that parses as a
/// JSON object.
fn first_json_object(raw: &str) -> Option<Map<String, Value>> {
    let bytes = raw.as_bytes();
    let mut start = 0;
    while let Some(off) = raw[start..].find('{') {
        let open = start + off;
        let mut depth = 0usize;
        let mut in_str = false;
        let mut escaped = false;
        let mut close = None;
        for (i, &b) in bytes.iter().enumerate().skip(open) {
            if in_str {
                match b {
                    _ if escaped => escaped = false,
                    b'\\' => escaped = true,
                    b'"' => in_str = false,
                    _ => {}
                }
                continue;
            }
            match b {
                b'"' => in_str = true,
                b'{' => depth += 1,
                b'}' => {
                    depth -= 1;
                    if depth == 0 {
                        close = Some(i);
                        break;
                    }
                }
                _ => {}
            }
        }
        if let Some(close) = close {
            if let Ok(Value::Object(map)) = serde_json::from_str(&raw[open..=close]) {
                return Some(map);
            }
        }
        start = open + 1;
    }
    None
}

/// Produces raw model text for a rendered prompt.
pub trait Responder: Send + Sync {
    /// Short identifier recorded in run manifests.
    fn identifier(&self) -> String;

    fn respond(&self, ctx: &AssembledContext, prompt: &str) -> Result<String, ClassifyError>;
}

/// Offline stand-in: positive iff the context mentions any keyword, with
/// severity 1 + number of distinct keywords found (capped at 5). It reads
/// only the context text, never the instructions around it.
#[derive(Clone, Debug)]
pub struct MockResponder {
    keywords: Vec<String>,
}

impl MockResponder {
    pub fn new<I, S>(keywords: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut keywords: Vec<String> =
            keywords.into_iter().map(|k| k.as_ref().trim().to_lowercase()).filter(|k| !k.is_empty()).collect();
        keywords.sort();
        keywords.dedup();
        MockResponder { keywords }
    }

    pub fn judge(&self, text: &str) -> (u8, u8) {
        let lower = text.to_lowercase();
        let hits = self.keywords.iter().filter(|k| lower.contains(k.as_str())).count();
        if hits == 0 {
            (0, 1)
        } else {
            (1, (1 + hits).min(5) as u8)
        }
    }
}

impl Responder for MockResponder {
    fn identifier(&self) -> String {
        format!("mock:keywords={}", self.keywords.len())
    }

    fn respond(&self, ctx: &AssembledContext, _prompt: &str) -> Result<String, ClassifyError> {
        let (label, severity) = self.judge(&ctx.text);
        Ok(json!({ "complication": label, "severity": severity }).to_string())
    }
}

/// Chat-completions client: request `{"model", "temperature", "messages"}`,
/// answer text at `choices[0].message.content`.
#[derive(Clone, Debug)]
pub struct RemoteResponder {
    endpoint: String,
    model: String,
    temperature: f64,
    client: HttpClient,
    retry: RetryPolicy,
}

impl RemoteResponder {
    pub fn new(cfg: &ClassifierConfig, client: HttpClient, retry: RetryPolicy) -> Result<Self, ClassifyError> {
        let endpoint = cfg
            .endpoint
            .clone()
            .ok_or_else(|| ClassifyError::Config("remote classifier requires an endpoint".into()))?;
        Ok(RemoteResponder { endpoint, model: cfg.model_name.clone(), temperature: cfg.temperature, client, retry })
    }
}

impl Responder for RemoteResponder {
    fn identifier(&self) -> String {
        format!("remote:{}@{}", self.model, self.endpoint)
    }

    fn respond(&self, _ctx: &AssembledContext, prompt: &str) -> Result<String, ClassifyError> {
        let body = json!({
            "model": self.model,
            "temperature": self.temperature,
            "messages": [{ "role": "user", "content": prompt }],
        });
        let resp = self.retry.run(|| self.client.post_json(&self.endpoint, &body))?;
        resp.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| ClassifyError::Schema { path: "choices[0].message.content".into() })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FailedOutcome {
    pub patient_id: String,
    pub mode: Mode,
    pub error: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_response: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum BatchEntry {
    Ok(ClassificationOutcome),
    Failed(FailedOutcome),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchManifest {
    pub classifier: String,
    pub config: ClassifierConfig,
    pub parallelism: usize,
    pub started_at: Option<DateTime<Utc>>,
    pub finished_at: Option<DateTime<Utc>>,
    pub succeeded: usize,
    pub failed: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatchResult {
    pub entries: Vec<BatchEntry>,
    pub manifest: BatchManifest,
}

impl BatchResult {
    pub fn outcomes(&self) -> impl Iterator<Item = &ClassificationOutcome> {
        self.entries.iter().filter_map(|e| match e {
            BatchEntry::Ok(o) => Some(o),
            BatchEntry::Failed(_) => None,
        })
    }

    pub fn failures(&self) -> impl Iterator<Item = &FailedOutcome> {
        self.entries.iter().filter_map(|e| match e {
            BatchEntry::Failed(f) => Some(f),
            BatchEntry::Ok(_) => None,
        })
    }
}

pub struct Classifier {
    cfg: ClassifierConfig,
    responder: Box<dyn Responder>,
    deterministic: bool,
}

impl Classifier {
    /// Builds the responder named by `cfg.kind`; remote classifiers
    /// authenticate with `BUDGETRAG_API_KEY`.
    pub fn from_config(cfg: ClassifierConfig) -> Result<Self, ClassifyError> {
        cfg.validate()?;
        let responder: Box<dyn Responder> = match cfg.kind {
            ClassifierKind::Mock => Box::new(MockResponder::new(&cfg.keywords)),
            ClassifierKind::Remote => {
                let client = HttpClient::from_env(Duration::from_secs(cfg.timeout_secs));
                Box::new(RemoteResponder::new(&cfg, client, cfg.retry_policy())?)
            }
        };
        Ok(Classifier { cfg, responder, deterministic: false })
    }

    pub fn with_responder(cfg: ClassifierConfig, responder: Box<dyn Responder>) -> Result<Self, ClassifyError> {
        cfg.validate()?;
        Ok(Classifier { cfg, responder, deterministic: false })
    }

    /// Zeroes latencies and timestamps so repeated runs are byte-identical.
    pub fn deterministic(mut self, on: bool) -> Self {
        self.deterministic = on;
        self
    }

    pub fn config(&self) -> &ClassifierConfig {
        &self.cfg
    }

    pub fn identifier(&self) -> String {
        self.responder.identifier()
    }

    pub fn classify(&self, ctx: &AssembledContext) -> Result<ClassificationOutcome, ClassifyError> {
        let prompt = self.cfg.render_prompt(&ctx.text);
        let started = Instant::now();
        let raw = self.responder.respond(ctx, &prompt)?;
        let latency_ms = if self.deterministic { 0 } else { started.elapsed().as_millis() as u64 };
        let parsed = parse_response(&raw)?;
        if parsed.severity_defaulted {
            log::warn!("{}: response has no severity, assuming {DEFAULT_SEVERITY}", ctx.patient_id);
        }
        Ok(ClassificationOutcome {
            patient_id: ctx.patient_id.clone(),
            mode: ctx.mode,
            label: parsed.label,
            severity: parsed.severity,
            score: rank_score(parsed.label, parsed.severity),
            severity_defaulted: parsed.severity_defaulted,
            raw_response: raw,
            prompt_words: word_count(&prompt),
            latency_ms,
            truth: ctx.truth,
        })
    }

    /// Classifies every context with up to `parallelism` concurrent calls.
    /// Output order follows input order; failures are recorded, not raised.
    pub fn classify_batch(&self, contexts: &[AssembledContext], parallelism: usize) -> BatchResult {
        let parallelism = parallelism.max(1);
        let started_at = (!self.deterministic).then(Utc::now);
        let run = |ctx: &AssembledContext| match self.classify(ctx) {
            Ok(o) => BatchEntry::Ok(o),
            Err(e) => BatchEntry::Failed(FailedOutcome {
                patient_id: ctx.patient_id.clone(),
                mode: ctx.mode,
                error: e.to_string(),
                raw_response: e.raw_response().map(str::to_string),
            }),
        };
        let entries: Vec<BatchEntry> = if parallelism == 1 {
            contexts.iter().map(run).collect()
        } else {
            match rayon::ThreadPoolBuilder::new().num_threads(parallelism).build() {
                Ok(pool) => pool.install(|| contexts.par_iter().map(run).collect()),
                Err(e) => {
                    log::warn!("cannot start worker pool ({e}); classifying sequentially");
                    contexts.iter().map(run).collect()
                }
            }
        };
        let failed = entries.iter().filter(|e| matches!(e, BatchEntry::Failed(_))).count();
        BatchResult {
            manifest: BatchManifest {
                classifier: self.identifier(),
                config: self.cfg.clone(),
                parallelism,
                started_at,
                finished_at: (!self.deterministic).then(Utc::now),
                succeeded: entries.len() - failed,
                failed,
            },
            entries,
        }
    }
}

/// One-shot classification with a freshly built classifier.
pub fn classify(ctx: &AssembledContext, cfg: &ClassifierConfig) -> Result<ClassificationOutcome, ClassifyError> {
    Classifier::from_config(cfg.clone())?.classify(ctx)
}

/// Offline classification with the keyword mock.
pub fn classify_mock(ctx: &AssembledContext, keywords: &[String]) -> ClassificationOutcome {
    let cfg = ClassifierConfig { keywords: keywords.to_vec(), ..ClassifierConfig::default() };
    Classifier::with_responder(cfg, Box::new(MockResponder::new(keywords)))
        .and_then(|c| c.deterministic(true).classify(ctx))
        .expect("mock responses always parse")
}

pub fn classify_batch(
    contexts: &[AssembledContext],
    cfg: &ClassifierConfig,
    parallelism: usize,
) -> Result<BatchResult, ClassifyError> {
    Ok(Classifier::from_config(cfg.clone())?.classify_batch(contexts, parallelism))
}
