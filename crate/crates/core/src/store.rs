//! Embedding store and exact cosine top-K retrieval.
//!
//! On-disk vector layout: 8 magic bytes `CTRREMB1`, little-endian `u32`
//! count, little-endian `u32` dim, then `count * dim` little-endian `f32`
//! values in row-major order. Ids live in a sidecar text file, one per line.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::cmp::Ordering;

use thiserror::Error;

pub const MAGIC: &[u8; 8] = b"CTRREMB1";
pub const HEADER_LEN: usize = 16;

/// Rows must be unit length to within this tolerance after normalization.
pub const NORM_TOLERANCE: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StoreError {
    #[error("bad magic bytes")]
    BadMagic,
    #[error("truncated header: {found} of {HEADER_LEN} bytes")]
    TruncatedHeader { found: usize },
    #[error("row count is zero")]
    ZeroCount,
    #[error("dimension is zero")]
    ZeroDim,
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },
    #[error("trailing bytes after payload: expected {expected} bytes, found {found}")]
    TrailingBytes { expected: usize, found: usize },
    #[error("duplicate id `{id}` on line {line}")]
    DuplicateId { id: String, line: usize },
    #[error("empty id on line {line}")]
    EmptyId { line: usize },
    #[error("id count {ids} does not match row count {rows}")]
    IdCountMismatch { ids: usize, rows: usize },
    #[error("row {row} (`{id}`) has zero norm")]
    ZeroNormRow { row: usize, id: String },
    #[error("row {row} contains a non-finite value")]
    NonFinite { row: usize },
    #[error("dimension mismatch: store has {store}, query has {query}")]
    DimensionMismatch { store: usize, query: usize },
    #[error("query vector has zero norm")]
    ZeroNormQuery,
    #[error("k must be at least 1")]
    ZeroK,
}

/// Decoded vector payload, not yet normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct RawVectors {
    pub count: usize,
    pub dim: usize,
    pub data: Vec<f32>,
}

pub fn decode_vectors(bytes: &[u8]) -> Result<RawVectors, StoreError> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(StoreError::BadMagic);
    }
    if bytes.len() < HEADER_LEN {
        return Err(StoreError::TruncatedHeader { found: bytes.len() });
    }
    let count = u32::from_le_bytes([bytes[8], bytes[9], bytes[10], bytes[11]]) as usize;
    let dim = u32::from_le_bytes([bytes[12], bytes[13], bytes[14], bytes[15]]) as usize;
    if count == 0 {
        return Err(StoreError::ZeroCount);
    }
    if dim == 0 {
        return Err(StoreError::ZeroDim);
    }
    let expected = count
        .checked_mul(dim)
        .and_then(|n| n.checked_mul(4))
        .and_then(|n| n.checked_add(HEADER_LEN))
        .unwrap_or(usize::MAX);
    match bytes.len().cmp(&expected) {
        Ordering::Less => {
            return Err(StoreError::TruncatedPayload {
                expected,
                found: bytes.len(),
            })
        }
        Ordering::Greater => {
            return Err(StoreError::TrailingBytes {
                expected,
                found: bytes.len(),
            })
        }
        Ordering::Equal => {}
    }
    let data = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok(RawVectors { count, dim, data })
}

/// Serializes `data` (row-major, `data.len() / dim` rows) in the store format.
pub fn encode_vectors(dim: usize, data: &[f32]) -> Vec<u8> {
    assert!(
        dim > 0 && data.len().is_multiple_of(dim),
        "data is not a whole number of rows"
    );
    let count = data.len() / dim;
    let mut out = Vec::with_capacity(HEADER_LEN + data.len() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(count as u32).to_le_bytes());
    out.extend_from_slice(&(dim as u32).to_le_bytes());
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Parses a sidecar id file: one id per line, no blank lines. A single
/// terminating newline is accepted.
pub fn parse_ids(text: &str) -> Result<Vec<String>, StoreError> {
    let body = text.strip_suffix('\n').unwrap_or(text);
    let mut seen = BTreeMap::new();
    let mut ids = Vec::new();
    for (i, line) in body.split('\n').enumerate() {
        let line_no = i + 1;
        if line.is_empty() {
            return Err(StoreError::EmptyId { line: line_no });
        }
        if seen.insert(line, line_no).is_some() {
            return Err(StoreError::DuplicateId {
                id: line.to_string(),
                line: line_no,
            });
        }
        ids.push(line.to_string());
    }
    Ok(ids)
}

pub fn encode_ids<S: AsRef<str>>(ids: &[S]) -> String {
    let mut out = String::new();
    for id in ids {
        out.push_str(id.as_ref());
        out.push('\n');
    }
    out
}

/// One retrieved candidate.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Candidate {
    pub id: String,
    /// 1-based position in the initial ranking.
    pub initial_rank: usize,
    /// Cosine similarity in `[-1, 1]`.
    pub score: f64,
}

#[derive(Debug, Clone, Default, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(transparent)]
pub struct CandidateList(pub Vec<Candidate>);

impl CandidateList {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn ids(&self) -> Vec<String> {
        self.0.iter().map(|c| c.id.clone()).collect()
    }

    pub fn iter(&self) -> core::slice::Iter<'_, Candidate> {
        self.0.iter()
    }
}

/// Id-indexed matrix of unit-length `f32` rows. Immutable once built; rows
/// are normalized exactly once at construction.
#[derive(Debug, Clone)]
pub struct EmbeddingStore {
    ids: Vec<String>,
    index: BTreeMap<String, usize>,
    dim: usize,
    vectors: Vec<f32>,
}

impl EmbeddingStore {
    /// Builds a store from raw rows, L2-normalizing each one.
    pub fn from_rows(ids: Vec<String>, dim: usize, mut data: Vec<f32>) -> Result<Self, StoreError> {
        if dim == 0 {
            return Err(StoreError::ZeroDim);
        }
        if data.is_empty() {
            return Err(StoreError::ZeroCount);
        }
        if !data.len().is_multiple_of(dim) {
            return Err(StoreError::TruncatedPayload {
                expected: (data.len() / dim + 1) * dim * 4,
                found: data.len() * 4,
            });
        }
        let rows = data.len() / dim;
        if ids.len() != rows {
            return Err(StoreError::IdCountMismatch { ids: ids.len(), rows });
        }
        let mut index = BTreeMap::new();
        for (row, id) in ids.iter().enumerate() {
            if id.is_empty() {
                return Err(StoreError::EmptyId { line: row + 1 });
            }
            if index.insert(id.clone(), row).is_some() {
                return Err(StoreError::DuplicateId {
                    id: id.clone(),
                    line: row + 1,
                });
            }
        }
        for (row, chunk) in data.chunks_exact_mut(dim).enumerate() {
            if chunk.iter().any(|v| !v.is_finite()) {
                return Err(StoreError::NonFinite { row });
            }
            let norm = l2_norm(chunk);
            if norm == 0.0 {
                return Err(StoreError::ZeroNormRow {
                    row,
                    id: ids[row].clone(),
                });
            }
            for v in chunk.iter_mut() {
                *v = (f64::from(*v) / norm) as f32;
            }
        }
        Ok(Self {
            ids,
            index,
            dim,
            vectors: data,
        })
    }

    /// Decodes the vector file bytes plus sidecar id text.
    pub fn decode(vector_bytes: &[u8], ids_text: &str) -> Result<Self, StoreError> {
        let raw = decode_vectors(vector_bytes)?;
        let ids = parse_ids(ids_text)?;
        if ids.len() != raw.count {
            return Err(StoreError::IdCountMismatch {
                ids: ids.len(),
                rows: raw.count,
            });
        }
        Self::from_rows(ids, raw.dim, raw.data)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn row(&self, row: usize) -> &[f32] {
        &self.vectors[row * self.dim..(row + 1) * self.dim]
    }

    pub fn vector(&self, id: &str) -> Option<&[f32]> {
        self.position(id).map(|row| self.row(row))
    }

    /// Exact top-`k` rows by cosine similarity to `query`.
    ///
    /// Ties are broken by ascending row index, so the result is fully
    /// deterministic.
    pub fn top_k(&self, query: &[f32], k: usize) -> Result<CandidateList, StoreError> {
        if k == 0 {
            return Err(StoreError::ZeroK);
        }
        if query.len() != self.dim {
            return Err(StoreError::DimensionMismatch {
                store: self.dim,
                query: query.len(),
            });
        }
        let norm = l2_norm(query);
        if norm == 0.0 || !norm.is_finite() {
            return Err(StoreError::ZeroNormQuery);
        }
        let unit: Vec<f64> = query.iter().map(|v| f64::from(*v) / norm).collect();

        let mut scored: Vec<(f64, usize)> = (0..self.len())
            .map(|row| {
                let dot: f64 = self.row(row).iter().zip(&unit).map(|(a, b)| f64::from(*a) * b).sum();
                (dot, row)
            })
            .collect();

        let take = k.min(scored.len());
        if take < scored.len() {
            scored.select_nth_unstable_by(take - 1, by_score_then_row);
            scored.truncate(take);
        }
        scored.sort_unstable_by(by_score_then_row);

        Ok(CandidateList(
            scored
                .into_iter()
                .enumerate()
                .map(|(i, (score, row))| Candidate {
                    id: self.ids[row].clone(),
                    initial_rank: i + 1,
                    score: score.clamp(-1.0, 1.0),
                })
                .collect(),
        ))
    }
}

fn by_score_then_row(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    b.0.total_cmp(&a.0).then(a.1.cmp(&b.1))
}

fn l2_norm(v: &[f32]) -> f64 {
    libm::sqrt(v.iter().map(|x| f64::from(*x) * f64::from(*x)).sum())
}
