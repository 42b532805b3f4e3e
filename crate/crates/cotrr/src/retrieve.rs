//! Initial rankings: exact top-K from embedding stores, and the candidates
//! file (`{"query_id", "ids", "scores"}` per line) that carries them.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use cotrr_core::{CandidateList, EmbeddingStore, TaskKind};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::manifest::Numbered;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CandidatesLine {
    pub query_id: String,
    pub ids: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub scores: Vec<f64>,
}

#[derive(Debug, Error)]
pub enum RetrieveError {
    #[error("cannot read candidates {path}: {message}")]
    Read { path: String, message: String },
    #[error("candidates line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("query `{0}` has no embedding in the query store")]
    MissingQuery(String),
    #[error("query `{query_id}`: {message}")]
    Store { query_id: String, message: String },
}

/// Query id used for dialogue round `round` in query stores and candidate
/// files.
pub fn round_id(query_id: &str, round: usize) -> String {
    format!("{query_id}#r{round}")
}

pub fn parse_candidates(text: &str) -> Result<HashMap<String, Vec<String>>, RetrieveError> {
    let mut out = HashMap::new();
    for (i, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        let fail = |message: String| RetrieveError::Line { line: i + 1, message };
        let line: CandidatesLine = serde_json::from_str(raw).map_err(|e| fail(e.to_string()))?;
        if line.ids.is_empty() {
            return Err(fail("ids is empty".into()));
        }
        let mut unique = std::collections::HashSet::new();
        if let Some(dup) = line.ids.iter().find(|id| !unique.insert(id.as_str())) {
            return Err(fail(format!("id `{dup}` repeated")));
        }
        if out.insert(line.query_id.clone(), line.ids).is_some() {
            return Err(fail(format!("query_id `{}` repeated", line.query_id)));
        }
    }
    Ok(out)
}

pub fn load_candidates(path: &Path) -> Result<HashMap<String, Vec<String>>, RetrieveError> {
    let text = std::fs::read_to_string(path).map_err(|e| RetrieveError::Read {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_candidates(&text)
}

fn retrieve_one(
    images: &EmbeddingStore,
    queries: &EmbeddingStore,
    query_id: &str,
    depth: usize,
) -> Result<CandidateList, RetrieveError> {
    let vector = queries
        .vector(query_id)
        .ok_or_else(|| RetrieveError::MissingQuery(query_id.to_string()))?;
    images.top_k(vector, depth).map_err(|e| RetrieveError::Store {
        query_id: query_id.to_string(),
        message: e.to_string(),
    })
}

/// Ids looked up in the query store for a record: one per dialogue round
/// that has its own embedding (falling back to the dialogue id), or the
/// query id itself.
pub fn query_ids_for(record: &cotrr_core::ManifestRecord, queries: &EmbeddingStore) -> Vec<String> {
    if record.task != TaskKind::Chat {
        return vec![record.query_id.clone()];
    }
    let rounds: Vec<String> = (0..record.round_count())
        .map(|t| round_id(&record.query_id, t))
        .filter(|id| queries.contains(id))
        .collect();
    if rounds.is_empty() {
        vec![record.query_id.clone()]
    } else {
        rounds
    }
}

/// Top-`depth` candidates for every manifest query, as candidates-file text.
pub fn retrieve_all(
    records: &[Numbered],
    images: &EmbeddingStore,
    queries: &EmbeddingStore,
    depth: usize,
) -> Result<String, RetrieveError> {
    let mut out = String::new();
    for n in records {
        for query_id in query_ids_for(&n.record, queries) {
            let list = retrieve_one(images, queries, &query_id, depth)?;
            let line = CandidatesLine {
                query_id,
                ids: list.ids(),
                scores: list.iter().map(|c| c.score).collect(),
            };
            let _ = writeln!(out, "{}", serde_json::to_string(&line).expect("serializable"));
        }
    }
    Ok(out)
}
