//! Flat, exact vector index over chunk embeddings.
//!
//! Search is a full scan ranked by dot product of unit vectors (cosine),
//! with ties broken by ascending chunk position and then patient id, so the
//! result of every query is fully determined.
//!
//! File layout (little-endian):
//!
//! ```text
//! "BRAGIDX1" | u32 version | u32 dim | u64 count
//! count x ( u32 id_len | id bytes | u32 position | dim x f32 )
//! u32 fingerprint_len | fingerprint bytes
//! u32 CRC32C of everything above
//! ```

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{Embedding, UNIT_NORM_TOLERANCE};

pub const MAGIC: &[u8; 8] = b"BRAGIDX1";
pub const FORMAT_VERSION: u32 = 1;

/// Entry count above which search scans partitions in parallel.
const PARALLEL_SCAN_MIN: usize = 32_768;

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("vector has dimension {actual}, index expects {expected}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("duplicate chunk {0}")]
    DuplicateKey(ChunkRef),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("not an index file (bad magic)")]
    BadMagic,
    #[error("unsupported index format version {0}")]
    UnsupportedVersion(u32),
    #[error("index file truncated at byte {offset} (needed {needed} more)")]
    Truncated { offset: usize, needed: usize },
    #[error("index checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    ChecksumMismatch { stored: u32, computed: u32 },
    #[error("corrupt index: {0}")]
    Corrupt(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ChunkRef {
    pub patient_id: String,
    pub position: u32,
}

impl ChunkRef {
    pub fn new(patient_id: impl Into<String>, position: u32) -> Self {
        ChunkRef { patient_id: patient_id.into(), position }
    }
}

impl std::fmt::Display for ChunkRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}#{}", self.patient_id, self.position)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub chunk: ChunkRef,
    pub score: f64,
}

/// Ranking order shared by search and everything that re-ranks hits:
/// descending score, then ascending position, then patient id. Scores
/// compare numerically, so -0.0 and 0.0 tie.
pub fn rank_order(a_score: f64, a: (&str, u32), b_score: f64, b: (&str, u32)) -> Ordering {
    b_score
        .partial_cmp(&a_score)
        .unwrap_or_else(|| b_score.total_cmp(&a_score))
        .then(a.1.cmp(&b.1))
        .then_with(|| a.0.cmp(b.0))
}

#[derive(Clone, Debug, PartialEq)]
pub struct VectorIndex {
    dim: usize,
    fingerprint: String,
    refs: Vec<ChunkRef>,
    vectors: Vec<f32>,
    by_key: HashMap<ChunkRef, usize>,
    by_patient: HashMap<String, Vec<usize>>,
}

/// Heap element; `Ord` puts the worse-ranked candidate on top.
struct Candidate<'a> {
    score: f64,
    key: &'a ChunkRef,
    idx: usize,
}

impl Ord for Candidate<'_> {
    fn cmp(&self, other: &Self) -> Ordering {
        rank_order(
            self.score,
            (&self.key.patient_id, self.key.position),
            other.score,
            (&other.key.patient_id, other.key.position),
        )
    }
}

impl PartialOrd for Candidate<'_> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Candidate<'_> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate<'_> {}

impl VectorIndex {
    pub fn new(dim: usize, fingerprint: impl Into<String>) -> Self {
        VectorIndex {
            dim,
            fingerprint: fingerprint.into(),
            refs: Vec::new(),
            vectors: Vec::new(),
            by_key: HashMap::new(),
            by_patient: HashMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn len(&self) -> usize {
        self.refs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.refs.is_empty()
    }

    pub fn refs(&self) -> &[ChunkRef] {
        &self.refs
    }

    pub fn vector(&self, i: usize) -> &[f32] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    pub fn contains_patient(&self, patient_id: &str) -> bool {
        self.by_patient.contains_key(patient_id)
    }

    pub fn get(&self, key: &ChunkRef) -> Option<&[f32]> {
        self.by_key.get(key).map(|&i| self.vector(i))
    }

    pub fn add(&mut self, chunk: ChunkRef, vector: &Embedding) -> Result<(), IndexError> {
        if vector.dim() != self.dim {
            return Err(IndexError::DimensionMismatch { expected: self.dim, actual: vector.dim() });
        }
        self.push(chunk, vector.as_slice())
    }

    fn push(&mut self, chunk: ChunkRef, vector: &[f32]) -> Result<(), IndexError> {
        if self.by_key.contains_key(&chunk) {
            return Err(IndexError::DuplicateKey(chunk));
        }
        let idx = self.refs.len();
        self.by_patient.entry(chunk.patient_id.clone()).or_default().push(idx);
        self.by_key.insert(chunk.clone(), idx);
        self.refs.push(chunk);
        self.vectors.extend_from_slice(vector);
        Ok(())
    }

    /// Exact top-`k` entries by cosine similarity, optionally restricted to
    /// one patient's chunks. Fewer than `k` candidates returns all of them.
    pub fn search(
        &self,
        query: &Embedding,
        k: usize,
        filter_patient: Option<&str>,
    ) -> Result<Vec<SearchHit>, IndexError> {
        if query.dim() != self.dim {
            return Err(IndexError::DimensionMismatch { expected: self.dim, actual: query.dim() });
        }
        if k == 0 {
            return Ok(Vec::new());
        }
        let q = query.as_slice();
        let top = match filter_patient {
            Some(pid) => {
                let ids = self.by_patient.get(pid).map(Vec::as_slice).unwrap_or_default();
                self.top_k(q, k, ids.iter().copied())
            }
            None if self.len() >= PARALLEL_SCAN_MIN => {
                let parts: Vec<Vec<Candidate<'_>>> = (0..self.len())
                    .collect::<Vec<_>>()
                    .par_chunks(PARALLEL_SCAN_MIN / 4)
                    .map(|part| self.top_k(q, k, part.iter().copied()))
                    .collect();
                let mut merged: Vec<Candidate<'_>> = parts.into_iter().flatten().collect();
                merged.sort();
                merged.truncate(k);
                merged
            }
            None => self.top_k(q, k, 0..self.len()),
        };
        Ok(top.into_iter().map(|c| SearchHit { chunk: self.refs[c.idx].clone(), score: c.score }).collect())
    }

    /// Best-first top-k over the given entry indices.
    fn top_k(&self, q: &[f32], k: usize, ids: impl Iterator<Item = usize>) -> Vec<Candidate<'_>> {
        let mut heap: BinaryHeap<Candidate<'_>> = BinaryHeap::with_capacity(k.min(self.len()) + 1);
        for idx in ids {
            let c = Candidate { score: crate::embedding::dot(self.vector(idx), q), key: &self.refs[idx], idx };
            if heap.len() < k {
                heap.push(c);
            } else if let Some(worst) = heap.peek() {
                if c < *worst {
                    heap.pop();
                    heap.push(c);
                }
            }
        }
        heap.into_sorted_vec()
    }

    /// Canonical byte serialization.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(24 + self.vectors.len() * 4 + self.refs.len() * 16);
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        buf.extend_from_slice(&(self.dim as u32).to_le_bytes());
        buf.extend_from_slice(&(self.refs.len() as u64).to_le_bytes());
        for (i, r) in self.refs.iter().enumerate() {
            buf.extend_from_slice(&(r.patient_id.len() as u32).to_le_bytes());
            buf.extend_from_slice(r.patient_id.as_bytes());
            buf.extend_from_slice(&r.position.to_le_bytes());
            for v in self.vector(i) {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        buf.extend_from_slice(&(self.fingerprint.len() as u32).to_le_bytes());
        buf.extend_from_slice(self.fingerprint.as_bytes());
        let crc = crc32c::crc32c(&buf);
        buf.extend_from_slice(&crc.to_le_bytes());
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, IndexError> {
        let head = &bytes[..bytes.len().min(MAGIC.len())];
        if head != &MAGIC[..head.len()] {
            return Err(IndexError::BadMagic);
        }
        let mut r = Reader { bytes, pos: 0 };
        r.take(MAGIC.len())?;
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(IndexError::UnsupportedVersion(version));
        }
        let dim = r.u32()? as usize;
        let count = r.u64()?;
        // smallest possible entry: empty id, position, dim floats
        let min_entry = 8 + 4 * dim as u64;
        if count.saturating_mul(min_entry) > (bytes.len() - r.pos) as u64 {
            return Err(IndexError::Truncated {
                offset: bytes.len(),
                needed: (count.saturating_mul(min_entry) as usize).saturating_sub(bytes.len() - r.pos),
            });
        }
        let mut entries = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let len = r.u32()? as usize;
            let id = std::str::from_utf8(r.take(len)?)
                .map_err(|_| IndexError::Corrupt("patient id is not UTF-8".into()))?
                .to_string();
            let position = r.u32()?;
            let raw = r.take(dim * 4)?;
            let vector: Vec<f32> = raw.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect();
            entries.push((ChunkRef { patient_id: id, position }, vector));
        }
        let fp_len = r.u32()? as usize;
        let fingerprint = std::str::from_utf8(r.take(fp_len)?)
            .map_err(|_| IndexError::Corrupt("fingerprint is not UTF-8".into()))?
            .to_string();
        let body_end = r.pos;
        let stored = r.u32()?;
        if r.pos != bytes.len() {
            return Err(IndexError::Corrupt(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        let computed = crc32c::crc32c(&bytes[..body_end]);
        if stored != computed {
            return Err(IndexError::ChecksumMismatch { stored, computed });
        }

        let mut index = VectorIndex::new(dim, fingerprint);
        for (chunk, vector) in entries {
            let norm = crate::embedding::dot(&vector, &vector).sqrt();
            if (norm - 1.0).abs() > UNIT_NORM_TOLERANCE {
                return Err(IndexError::Corrupt(format!("vector for {chunk} has norm {norm}")));
            }
            index.push(chunk, &vector).map_err(|e| IndexError::Corrupt(e.to_string()))?;
        }
        Ok(index)
    }

    pub fn save(&self, path: &Path) -> Result<(), IndexError> {
        fs::write(path, self.to_bytes()).map_err(|source| IndexError::Io { path: path.to_path_buf(), source })
    }

    pub fn load(path: &Path) -> Result<Self, IndexError> {
        let bytes = fs::read(path).map_err(|source| IndexError::Io { path: path.to_path_buf(), source })?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], IndexError> {
        let avail = self.bytes.len() - self.pos;
        if n > avail {
            return Err(IndexError::Truncated { offset: self.bytes.len(), needed: n - avail });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, IndexError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, IndexError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
