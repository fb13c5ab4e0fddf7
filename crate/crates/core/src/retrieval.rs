//! Context assembly for the two ingestion modes.
//!
//! `Rag` ranks a patient's chunks against a fixed query and packs the best
//! ones into a word budget, then restores narrative order. `Long` feeds the
//! whole windowed text.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{self, ChunkedRecord, CorpusError, PatientRecord, NOTE_SEPARATOR};
use crate::embedding::{EmbedError, Embedder, Embedding};
use crate::vindex::{ChunkRef, IndexError, VectorIndex};

pub const DEFAULT_BUDGET_WORDS: usize = 4000;
pub const DEFAULT_TOP_N_SCAN: usize = 64;

/// Default retrieval query. Plain lowercase terms, since the hashing
/// embedder treats punctuation as part of a word.
pub const DEFAULT_QUERY: &str = "postoperative complication anastomotic leak reoperation return \
    operating room surgical site infection wound dehiscence abscess sepsis septic shock hemorrhage \
    bleeding transfusion pulmonary embolism deep vein thrombosis pneumonia respiratory failure \
    reintubation myocardial infarction unplanned readmission";

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("patient {0:?} has chunks but none are in the index")]
    PatientNotIndexed(String),
    #[error("index returned {0} which the record does not contain")]
    MissingChunk(ChunkRef),
    #[error("index was built with {index:?} but queries use {embedder:?}")]
    FingerprintMismatch { index: String, embedder: String },
    #[error("invalid retrieval config: {0}")]
    Config(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    #[serde(rename = "RAG")]
    Rag,
    #[serde(rename = "LONG")]
    Long,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Rag => "RAG",
            Mode::Long => "LONG",
        })
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "rag" => Ok(Mode::Rag),
            "long" => Ok(Mode::Long),
            other => Err(format!("unknown mode {other:?} (expected rag or long)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetrievalConfig {
    pub budget_words: usize,
    pub query_text: String,
    /// Maximum number of ranked candidates examined per patient.
    pub top_n_scan: usize,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        RetrievalConfig {
            budget_words: DEFAULT_BUDGET_WORDS,
            query_text: DEFAULT_QUERY.to_string(),
            top_n_scan: DEFAULT_TOP_N_SCAN,
        }
    }
}

impl RetrievalConfig {
    pub fn validate(&self) -> Result<(), RetrievalError> {
        if self.budget_words == 0 || self.top_n_scan == 0 {
            return Err(RetrievalError::Config("budget_words and top_n_scan must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssembledContext {
    pub patient_id: String,
    pub mode: Mode,
    pub word_count: usize,
    /// Words available for this patient before selection.
    pub source_words: usize,
    /// Chunk positions in narrative order (RAG only).
    #[serde(default)]
    pub selected_positions: Vec<u32>,
    /// Examined candidates as (position, score), best first (RAG only).
    #[serde(default)]
    pub candidate_scores: Vec<(u32, f64)>,
    /// Ground-truth label carried through for evaluation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<u8>,
    pub text: String,
}

/// Embeds every chunk of every record into a fresh index.
pub fn build_index(records: &[ChunkedRecord], embedder: &dyn Embedder) -> Result<VectorIndex, RetrievalError> {
    let chunks: Vec<_> = records.iter().flat_map(|r| r.chunks.iter()).collect();
    let texts: Vec<&str> = chunks.iter().map(|c| c.text.as_str()).collect();
    let vectors = embedder.embed_batch(&texts)?;
    let mut index = VectorIndex::new(embedder.dim(), embedder.fingerprint());
    for (chunk, v) in chunks.iter().zip(&vectors) {
        index.add(ChunkRef::new(chunk.patient_id.clone(), chunk.position), v)?;
    }
    Ok(index)
}

/// Embeds `cfg.query_text` and assembles the budgeted context for `record`.
pub fn assemble_rag(
    record: &ChunkedRecord,
    index: &VectorIndex,
    embedder: &dyn Embedder,
    cfg: &RetrievalConfig,
) -> Result<AssembledContext, RetrievalError> {
    check_fingerprint(index, embedder)?;
    let query = embedder.embed(&cfg.query_text)?;
    assemble_rag_with_query(record, index, &query, cfg)
}

pub fn check_fingerprint(index: &VectorIndex, embedder: &dyn Embedder) -> Result<(), RetrievalError> {
    if index.fingerprint() != embedder.fingerprint() {
        return Err(RetrievalError::FingerprintMismatch {
            index: index.fingerprint().to_string(),
            embedder: embedder.fingerprint(),
        });
    }
    Ok(())
}

/// Greedy-in-rank packing: walk the ranked candidates, take every chunk that
/// still fits the remaining budget and skip those that do not, until the
/// scan cap is reached or the budget is used up. Chunks are never split.
pub fn assemble_rag_with_query(
    record: &ChunkedRecord,
    index: &VectorIndex,
    query: &Embedding,
    cfg: &RetrievalConfig,
) -> Result<AssembledContext, RetrievalError> {
    cfg.validate()?;
    let pid = &record.record.patient_id;
    let mut ctx = AssembledContext {
        patient_id: pid.clone(),
        mode: Mode::Rag,
        word_count: 0,
        source_words: record.total_words(),
        selected_positions: Vec::new(),
        candidate_scores: Vec::new(),
        truth: Some(record.record.label),
        text: String::new(),
    };
    if record.chunks.is_empty() {
        return Ok(ctx);
    }
    if !index.contains_patient(pid) {
        return Err(RetrievalError::PatientNotIndexed(pid.clone()));
    }

    let mut remaining = cfg.budget_words;
    for hit in index.search(query, cfg.top_n_scan, Some(pid))? {
        let pos = hit.chunk.position;
        let chunk = record
            .chunks
            .get(pos as usize)
            .filter(|c| c.position == pos)
            .ok_or_else(|| RetrievalError::MissingChunk(hit.chunk.clone()))?;
        ctx.candidate_scores.push((pos, hit.score));
        let words = chunk.word_count as usize;
        if words <= remaining {
            remaining -= words;
            ctx.selected_positions.push(pos);
        }
        if remaining == 0 {
            break;
        }
    }
    ctx.selected_positions.sort_unstable();
    ctx.word_count = cfg.budget_words - remaining;
    ctx.text = ctx
        .selected_positions
        .iter()
        .map(|&p| record.chunks[p as usize].text.as_str())
        .collect::<Vec<_>>()
        .join(NOTE_SEPARATOR);
    Ok(ctx)
}

/// Whole windowed text, no budget.
pub fn assemble_long(record: &PatientRecord, window_days: u32) -> Result<AssembledContext, RetrievalError> {
    let windowed = corpus::window_notes(record, window_days)?;
    let text = corpus::concat_text(&windowed);
    let words = corpus::word_count(&text);
    Ok(AssembledContext {
        patient_id: record.patient_id.clone(),
        mode: Mode::Long,
        word_count: words,
        source_words: words,
        selected_positions: Vec::new(),
        candidate_scores: Vec::new(),
        truth: Some(record.label),
        text,
    })
}

/// (word count, fraction of the patient's words that made it into the
/// context). Long contexts and empty patients report a fraction of 1.
pub fn context_stats(ctx: &AssembledContext) -> (usize, f64) {
    let ratio = match ctx.mode {
        Mode::Long => 1.0,
        Mode::Rag if ctx.source_words == 0 => 1.0,
        Mode::Rag => ctx.word_count as f64 / ctx.source_words as f64,
    };
    (ctx.word_count, ratio)
}
