use std::fmt;

use budgetrag_core::classifier::ClassifyError;
use budgetrag_core::corpus::CorpusError;
use budgetrag_core::costmodel::CostError;
use budgetrag_core::embedding::EmbedError;
use budgetrag_core::jsonl::JsonlError;
use budgetrag_core::metrics::MetricsError;
use budgetrag_core::report::ReportError;
use budgetrag_core::retrieval::RetrievalError;
use budgetrag_core::vindex::IndexError;
use serde_json::json;

/// Failure of one command, carrying its exit code class.
#[derive(Debug)]
pub enum CliError {
    /// Bad flag combination (exit 1).
    Usage(String),
    /// Invalid or inconsistent input data (exit 2).
    Data { kind: &'static str, message: String, patient_ids: Vec<String> },
    /// Embedding or chat service failure (exit 3).
    Remote(String),
}

impl CliError {
    pub fn data(kind: &'static str, message: impl Into<String>) -> Self {
        CliError::Data { kind, message: message.into(), patient_ids: Vec::new() }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data { .. } => 2,
            CliError::Remote(_) => 3,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        let (kind, message, ids) = match self {
            CliError::Usage(m) => ("usage", m.as_str(), &[][..]),
            CliError::Data { kind, message, patient_ids } => (*kind, message.as_str(), patient_ids.as_slice()),
            CliError::Remote(m) => ("remote_service", m.as_str(), &[][..]),
        };
        let mut v = json!({ "error": { "kind": kind, "exit_code": self.exit_code(), "message": message } });
        if !ids.is_empty() {
            v["error"]["patient_ids"] = json!(ids);
        }
        v
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Remote(m) => f.write_str(m),
            CliError::Data { message, .. } => f.write_str(message),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

fn embed_is_remote(e: &EmbedError) -> bool {
    match e {
        EmbedError::Http(_) | EmbedError::Schema { .. } => true,
        EmbedError::Item { source, .. } => embed_is_remote(source),
        _ => false,
    }
}

impl From<EmbedError> for CliError {
    fn from(e: EmbedError) -> Self {
        if embed_is_remote(&e) {
            CliError::Remote(e.to_string())
        } else {
            CliError::data("embedding", e.to_string())
        }
    }
}

impl From<RetrievalError> for CliError {
    fn from(e: RetrievalError) -> Self {
        match e {
            RetrievalError::Embed(e) => e.into(),
            other => CliError::data("retrieval", other.to_string()),
        }
    }
}

impl From<ClassifyError> for CliError {
    fn from(e: ClassifyError) -> Self {
        match e {
            ClassifyError::Config(m) => CliError::data("config", m),
            other => CliError::Remote(other.to_string()),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        let kind = match &e {
            MetricsError::UndefinedMetric { .. } => "undefined_metric",
            MetricsError::Unpaired { .. } => "unpaired",
            MetricsError::InsufficientData { .. } => "insufficient_data",
            _ => "metrics",
        };
        let patient_ids = match &e {
            MetricsError::Unpaired { patient_ids, .. } => patient_ids.clone(),
            MetricsError::MissingTruth(id) | MetricsError::DuplicatePatient(id) => vec![id.clone()],
            _ => Vec::new(),
        };
        CliError::Data { kind, message: e.to_string(), patient_ids }
    }
}

impl From<CostError> for CliError {
    fn from(e: CostError) -> Self {
        let patient_ids = match &e {
            CostError::PatientMismatch { only_long, only_rag } => only_long.iter().chain(only_rag).cloned().collect(),
            CostError::InvalidPrice { .. } => Vec::new(),
        };
        CliError::Data { kind: "cost", message: e.to_string(), patient_ids }
    }
}

macro_rules! data_error {
    ($($ty:ty => $kind:literal),* $(,)?) => {
        $(impl From<$ty> for CliError {
            fn from(e: $ty) -> Self {
                CliError::data($kind, e.to_string())
            }
        })*
    };
}

data_error! {
    CorpusError => "corpus",
    IndexError => "index",
    JsonlError => "jsonl",
    ReportError => "report",
    std::io::Error => "io",
    serde_json::Error => "json",
}
