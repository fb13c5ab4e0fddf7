//! Effective configuration: command-line flags override the config file,
//! which overrides built-in defaults.

use std::fs;
use std::path::Path;

use budgetrag_core::classifier::{ClassifierConfig, ClassifierKind};
use budgetrag_core::corpus::{DEFAULT_CHUNK_WORDS, DEFAULT_WINDOW_DAYS};
use budgetrag_core::costmodel::PriceSheet;
use budgetrag_core::embedding::{EmbedderConfig, EmbedderKind};
use budgetrag_core::metrics::DEFAULT_THRESHOLD;
use budgetrag_core::retrieval::RetrievalConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub window_days: u32,
    pub chunk_words: usize,
    /// Admitted note types; `None` uses the built-in list.
    pub note_types: Option<Vec<String>>,
    pub embedder: EmbedderConfig,
    pub retrieval: RetrievalConfig,
    pub classifier: ClassifierConfig,
    pub prices: PriceSheet,
    pub parallelism: usize,
    pub threshold: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            window_days: DEFAULT_WINDOW_DAYS,
            chunk_words: DEFAULT_CHUNK_WORDS,
            note_types: None,
            embedder: EmbedderConfig::default(),
            retrieval: RetrievalConfig::default(),
            classifier: ClassifierConfig::default(),
            prices: PriceSheet::default(),
            parallelism: 4,
            threshold: DEFAULT_THRESHOLD,
        }
    }
}

/// Flag values that, when present, replace the configured ones.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub window_days: Option<u32>,
    pub budget_words: Option<usize>,
    pub query: Option<String>,
    pub embedder: Option<EmbedderKind>,
    pub embed_endpoint: Option<String>,
    pub embed_model: Option<String>,
    pub classifier: Option<ClassifierKind>,
    pub classify_endpoint: Option<String>,
    pub classify_model: Option<String>,
    pub parallelism: Option<usize>,
    pub price_per_million: Option<f64>,
}

impl PipelineConfig {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }

    pub fn apply(&mut self, o: &Overrides) {
        fn set<T: Clone>(slot: &mut T, v: &Option<T>) {
            if let Some(v) = v {
                *slot = v.clone();
            }
        }
        set(&mut self.window_days, &o.window_days);
        set(&mut self.retrieval.budget_words, &o.budget_words);
        set(&mut self.retrieval.query_text, &o.query);
        set(&mut self.embedder.kind, &o.embedder);
        if o.embed_endpoint.is_some() {
            self.embedder.endpoint = o.embed_endpoint.clone();
        }
        if o.embed_model.is_some() {
            self.embedder.model_name = o.embed_model.clone();
        }
        set(&mut self.classifier.kind, &o.classifier);
        if o.classify_endpoint.is_some() {
            self.classifier.endpoint = o.classify_endpoint.clone();
        }
        set(&mut self.classifier.model_name, &o.classify_model);
        set(&mut self.parallelism, &o.parallelism);
        set(&mut self.prices.usd_per_million_tokens, &o.price_per_million);
    }

    pub fn resolve(path: Option<&Path>, o: &Overrides) -> CliResult<Self> {
        let mut cfg = Self::load(path)?;
        cfg.apply(o);
        if cfg.window_days == 0 || cfg.chunk_words == 0 || cfg.parallelism == 0 {
            return Err(CliError::Usage("window_days, chunk_words and parallelism must be positive".into()));
        }
        if cfg.retrieval.budget_words == 0 {
            return Err(CliError::Usage("budget_words must be positive".into()));
        }
        Ok(cfg)
    }

    pub fn snapshot(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}
