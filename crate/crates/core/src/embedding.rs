//! Text embedders producing unit-length vectors.
//!
//! The offline default is a signed feature-hashing bag-of-words embedder:
//! every lowercased whitespace word is hashed with FNV-1a 64, the low bits
//! (mod `dim`) pick a bucket and the top bit picks the sign. Counts are
//! accumulated as integers, so the output is bit-identical on every platform.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::http::{HttpClient, HttpError, RetryPolicy};

pub const DEFAULT_DIM: usize = 256;
pub const UNIT_NORM_TOLERANCE: f64 = 1e-5;

const FNV_OFFSET: u64 = 14_695_981_039_346_656_037;
const FNV_PRIME: u64 = 1_099_511_628_211;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("invalid embedder config: {0}")]
    Config(String),
    #[error(transparent)]
    Http(#[from] HttpError),
    #[error("embedding response missing or invalid at `{path}`")]
    Schema { path: String },
    #[error("embedding service returned a zero vector")]
    ZeroVector,
    #[error("embedding has dimension {actual}, expected {expected}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("vector norm {norm} is not 1")]
    NotUnit { norm: f64 },
    #[error("item {index}: {source}")]
    Item { index: usize, source: Box<EmbedError> },
}

impl EmbedError {
    pub fn is_retryable(&self) -> bool {
        match self {
            EmbedError::Http(e) => e.is_retryable(),
            EmbedError::Item { source, .. } => source.is_retryable(),
            _ => false,
        }
    }
}

/// A unit-normalized embedding vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Embedding(Vec<f32>);

impl Embedding {
    /// Scales `values` to unit length; `None` for zero or non-finite input.
    pub fn normalize(values: Vec<f32>) -> Option<Self> {
        let norm = values.iter().map(|&v| f64::from(v) * f64::from(v)).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return None;
        }
        Some(Embedding(values.into_iter().map(|v| (f64::from(v) / norm) as f32).collect()))
    }

    /// Wraps values that are already unit length (within 1e-5) without
    /// rescaling them.
    pub fn from_unit(values: Vec<f32>) -> Result<Self, EmbedError> {
        let norm = l2_norm(&values);
        if (norm - 1.0).abs() > UNIT_NORM_TOLERANCE {
            return Err(EmbedError::NotUnit { norm });
        }
        Ok(Embedding(values))
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f32> {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        l2_norm(&self.0)
    }

    /// Cosine similarity with another unit vector.
    pub fn dot(&self, other: &Embedding) -> f64 {
        dot(&self.0, &other.0)
    }
}

/// Sequential f64 dot product; accumulation order is fixed so scores are
/// reproducible.
pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| f64::from(x) * f64::from(y)).sum()
}

fn l2_norm(v: &[f32]) -> f64 {
    v.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt()
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

/// Signed feature-hashing embedding of `text`. Empty text maps to the first
/// basis vector. Panics if `dim < 2`.
pub fn embed_hashing(text: &str, dim: usize) -> Embedding {
    assert!(dim >= 2, "hashing embedder needs dim >= 2");
    let mut counts = vec![0i64; dim];
    for word in text.to_lowercase().split_whitespace() {
        let h = fnv1a64(word.as_bytes());
        let bucket = (h % dim as u64) as usize;
        counts[bucket] += if h >> 63 == 0 { 1 } else { -1 };
    }
    let sq: i64 = counts.iter().map(|c| c * c).sum();
    if sq == 0 {
        let mut v = vec![0.0; dim];
        v[0] = 1.0;
        return Embedding(v);
    }
    let norm = (sq as f64).sqrt();
    Embedding(counts.into_iter().map(|c| (c as f64 / norm) as f32).collect())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbedderKind {
    #[default]
    Hashing,
    Remote,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbedderConfig {
    pub kind: EmbedderKind,
    pub dim: usize,
    pub endpoint: Option<String>,
    pub model_name: Option<String>,
    /// Concurrent remote requests allowed in flight.
    pub max_in_flight: usize,
    /// Texts per remote request.
    pub batch_size: usize,
    pub timeout_secs: u64,
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        EmbedderConfig {
            kind: EmbedderKind::Hashing,
            dim: DEFAULT_DIM,
            endpoint: None,
            model_name: None,
            max_in_flight: 4,
            batch_size: 32,
            timeout_secs: 60,
        }
    }
}

impl EmbedderConfig {
    pub fn validate(&self) -> Result<(), EmbedError> {
        if self.dim < 2 {
            return Err(EmbedError::Config("dim must be at least 2".into()));
        }
        if self.kind == EmbedderKind::Remote && self.endpoint.is_none() {
            return Err(EmbedError::Config("remote embedder requires an endpoint".into()));
        }
        if self.max_in_flight == 0 || self.batch_size == 0 {
            return Err(EmbedError::Config("max_in_flight and batch_size must be positive".into()));
        }
        Ok(())
    }
}

pub trait Embedder: Send + Sync {
    fn dim(&self) -> usize;

    /// Identifies the embedder and its parameters; stored in index files so
    /// queries are never embedded with a different model than the chunks.
    fn fingerprint(&self) -> String;

    fn embed(&self, text: &str) -> Result<Embedding, EmbedError>;

    /// Order-preserving; errors carry the index of the failing text.
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Embedding>, EmbedError> {
        texts
            .iter()
            .enumerate()
            .map(|(index, t)| self.embed(t).map_err(|e| EmbedError::Item { index, source: Box::new(e) }))
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct HashingEmbedder {
    dim: usize,
}

impl HashingEmbedder {
    pub fn new(dim: usize) -> Result<Self, EmbedError> {
        if dim < 2 {
            return Err(EmbedError::Config("dim must be at least 2".into()));
        }
        Ok(HashingEmbedder { dim })
    }
}

impl Embedder for HashingEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn fingerprint(&self) -> String {
        format!("hashing:fnv1a64:dim={}", self.dim)
    }

    fn embed(&self, text: &str) -> Result<Embedding, EmbedError> {
        Ok(embed_hashing(text, self.dim))
    }
}

/// Client for an embeddings-API-shaped service:
/// request `{"model", "input": [..]}`, response `{"data": [{"embedding": [..]}]}`.
#[derive(Clone, Debug)]
pub struct RemoteEmbedder {
    cfg: EmbedderConfig,
    client: HttpClient,
    retry: RetryPolicy,
}

impl RemoteEmbedder {
    pub fn new(cfg: EmbedderConfig, client: HttpClient, retry: RetryPolicy) -> Result<Self, EmbedError> {
        cfg.validate()?;
        if cfg.kind != EmbedderKind::Remote {
            return Err(EmbedError::Config("remote embedder needs kind = remote".into()));
        }
        Ok(RemoteEmbedder { cfg, client, retry })
    }

    fn endpoint(&self) -> &str {
        self.cfg.endpoint.as_deref().unwrap_or_default()
    }

    /// One request for all of `texts`.
    fn request(&self, texts: &[&str]) -> Result<Vec<Embedding>, EmbedError> {
        let body = json!({ "model": self.cfg.model_name, "input": texts });
        let resp = self.retry.run(|| self.client.post_json(self.endpoint(), &body))?;
        parse_embeddings(&resp, texts.len(), self.cfg.dim)
    }
}

/// Extracts and normalizes `data[i].embedding` for `i < expected`.
pub fn parse_embeddings(resp: &Value, expected: usize, dim: usize) -> Result<Vec<Embedding>, EmbedError> {
    let data = resp.get("data").and_then(Value::as_array).ok_or_else(|| EmbedError::Schema { path: "data".into() })?;
    (0..expected)
        .map(|i| {
            let path = format!("data[{i}].embedding");
            let values = data
                .get(i)
                .ok_or_else(|| EmbedError::Schema { path: format!("data[{i}]") })?
                .get("embedding")
                .and_then(Value::as_array)
                .ok_or_else(|| EmbedError::Schema { path: path.clone() })?
                .iter()
                .map(|v| v.as_f64().map(|x| x as f32))
                .collect::<Option<Vec<f32>>>()
                .ok_or_else(|| EmbedError::Schema { path: path.clone() })?;
            if values.len() != dim {
                return Err(EmbedError::DimensionMismatch { expected: dim, actual: values.len() });
            }
            Embedding::normalize(values).ok_or(EmbedError::ZeroVector)
        })
        .collect()
}

impl Embedder for RemoteEmbedder {
    fn dim(&self) -> usize {
        self.cfg.dim
    }

    fn fingerprint(&self) -> String {
        format!("remote:{}@{}:dim={}", self.cfg.model_name.as_deref().unwrap_or(""), self.endpoint(), self.cfg.dim)
    }

    fn embed(&self, text: &str) -> Result<Embedding, EmbedError> {
        Ok(self.request(&[text])?.remove(0))
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Embedding>, EmbedError> {
        let batches: Vec<&[&str]> = texts.chunks(self.cfg.batch_size).collect();
        type Slot = Mutex<Option<Result<Vec<Embedding>, EmbedError>>>;
        let results: Vec<Slot> = batches.iter().map(|_| Mutex::new(None)).collect();
        let next = AtomicUsize::new(0);
        let workers = self.cfg.max_in_flight.min(batches.len());
        thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    let b = next.fetch_add(1, Ordering::Relaxed);
                    if b >= batches.len() {
                        break;
                    }
                    let r = self.request(batches[b]);
                    *results[b].lock().unwrap() = Some(r);
                });
            }
        });
        let mut out = Vec::with_capacity(texts.len());
        for (b, slot) in results.into_iter().enumerate() {
            let first = b * self.cfg.batch_size;
            match slot.into_inner().unwrap().expect("every batch is processed") {
                Ok(v) => out.extend(v),
                Err(e) => return Err(EmbedError::Item { index: first, source: Box::new(e) }),
            }
        }
        Ok(out)
    }
}

/// Builds the embedder described by `cfg`. Remote embedders authenticate
/// with `BUDGETRAG_API_KEY`.
pub fn build_embedder(cfg: &EmbedderConfig) -> Result<Box<dyn Embedder>, EmbedError> {
    cfg.validate()?;
    match cfg.kind {
        EmbedderKind::Hashing => Ok(Box::new(HashingEmbedder::new(cfg.dim)?)),
        EmbedderKind::Remote => {
            let client = HttpClient::from_env(Duration::from_secs(cfg.timeout_secs));
            Ok(Box::new(RemoteEmbedder::new(cfg.clone(), client, RetryPolicy::default())?))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn fnv_reference_vectors() {
        // published FNV-1a 64 test vectors
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn empty_text_maps_to_first_basis_vector() {
        assert_eq!(embed_hashing("", 4).as_slice(), &[1.0, 0.0, 0.0, 0.0]);
        assert_eq!(embed_hashing("  \n", 4).as_slice(), &[1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn repeated_word_has_same_direction() {
        // counts [±2] and [±1] in one bucket normalize to the same unit vector
        assert_eq!(embed_hashing("alpha alpha", 64), embed_hashing("alpha", 64));
    }

    #[test]
    fn single_word_lands_in_its_hash_bucket() {
        let h = fnv1a64(b"leak");
        let e = embed_hashing("LEAK", 256);
        let bucket = (h % 256) as usize;
        let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
        assert_eq!(e.as_slice()[bucket], sign);
        assert_eq!(e.as_slice().iter().filter(|&&v| v != 0.0).count(), 1);
    }

    #[test]
    fn normalize_rejects_zero() {
        assert!(Embedding::normalize(vec![0.0, 0.0]).is_none());
        assert_eq!(Embedding::normalize(vec![3.0, 4.0]).unwrap().as_slice(), &[0.6, 0.8]);
    }

    #[test]
    fn parse_embeddings_reports_missing_paths() {
        let err = parse_embeddings(&json!({"object": "list"}), 1, 2).unwrap_err();
        assert!(matches!(&err, EmbedError::Schema { path } if path == "data"));
        let err = parse_embeddings(&json!({"data": [{}]}), 1, 2).unwrap_err();
        assert!(matches!(&err, EmbedError::Schema { path } if path == "data[0].embedding"));
        let err = parse_embeddings(&json!({"data": [{"embedding": [0, 0]}]}), 1, 2).unwrap_err();
        assert!(matches!(err, EmbedError::ZeroVector));
        let err = parse_embeddings(&json!({"data": [{"embedding": [1, 0, 0]}]}), 1, 2).unwrap_err();
        assert!(matches!(err, EmbedError::DimensionMismatch { expected: 2, actual: 3 }));
    }

    #[test]
    fn remote_config_requires_endpoint() {
        let cfg = EmbedderConfig { kind: EmbedderKind::Remote, ..Default::default() };
        assert!(matches!(cfg.validate(), Err(EmbedError::Config(_))));
        assert!(build_embedder(&EmbedderConfig::default()).is_ok());
    }

    #[test]
    fn batch_is_the_single_map() {
        let e = HashingEmbedder::new(32).unwrap();
        assert!(e.embed_batch(&[]).unwrap().is_empty());
        let batch = e.embed_batch(&["a", "b"]).unwrap();
        assert_eq!(batch, vec![e.embed("a").unwrap(), e.embed("b").unwrap()]);
    }

    proptest! {
        #[test]
        fn hashing_output_is_unit_norm(text in "\\PC{0,200}", dim in 2usize..512) {
            let e = embed_hashing(&text, dim);
            prop_assert_eq!(e.dim(), dim);
            prop_assert!((e.norm() - 1.0).abs() <= UNIT_NORM_TOLERANCE);
        }

        #[test]
        fn hashing_is_bag_of_words(words in prop::collection::vec("[a-z]{1,6}", 1..40), seed in any::<u64>()) {
            let mut shuffled = words.clone();
            let n = shuffled.len();
            for i in (1..n).rev() {
                shuffled.swap(i, (seed.wrapping_mul(i as u64 + 7) % (i as u64 + 1)) as usize);
            }
            let a = embed_hashing(&words.join(" "), 256);
            let b = embed_hashing(&shuffled.join("  "), 256);
            prop_assert_eq!(a, b);
        }
    }
}
