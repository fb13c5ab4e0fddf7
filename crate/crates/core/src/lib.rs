//! Budget-capped retrieval pipeline for classifying long patient records.
//!
//! Records are windowed and split into fixed-size word chunks, chunks are
//! embedded into a flat exact index, and each patient's context is either
//! the whole windowed text (`Mode::Long`) or the best-ranked chunks packed
//! into a word budget in narrative order (`Mode::Rag`). Outcomes from either
//! mode feed the metric suite (AUROC, precision/recall/F1, average
//! precision, DeLong paired test) and the cost model.

pub mod classifier;
pub mod corpus;
pub mod costmodel;
pub mod embedding;
pub mod http;
pub mod jsonl;
pub mod metrics;
pub mod report;
pub mod retrieval;
pub mod synth;
pub mod vindex;

pub use classifier::{
    classify, classify_batch, classify_mock, parse_response, rank_score, BatchEntry, BatchManifest, BatchResult,
    ClassificationOutcome, Classifier, ClassifierConfig, ClassifierKind, ClassifyError, FailedOutcome, MockResponder,
    RemoteResponder, Responder,
};
pub use corpus::{
    chunk_text, concat_text, load_chunked, load_corpus, prepare_corpus, window_notes, word_count, Chunk, ChunkedRecord,
    ClinicalNote, CorpusError, NoteWhitelist, PatientRecord,
};
pub use costmodel::{project_cost, project_time, summarize_usage, CostError, PriceSheet, UsageSummary};
pub use embedding::{
    build_embedder, embed_hashing, EmbedError, Embedder, EmbedderConfig, EmbedderKind, Embedding, HashingEmbedder,
    RemoteEmbedder,
};
pub use metrics::{
    auroc, confusion_metrics, delong_test, evaluate, normal_cdf, pr_auc, roc_points, DeLongResult, MetricBundle,
    MetricsError, ScoredCohort,
};
pub use retrieval::{
    assemble_long, assemble_rag, build_index, context_stats, AssembledContext, Mode, RetrievalConfig, RetrievalError,
};
pub use vindex::{ChunkRef, IndexError, SearchHit, VectorIndex};
