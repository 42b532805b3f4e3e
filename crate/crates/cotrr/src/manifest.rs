//! Canonical manifests: one JSON [`ManifestRecord`] per line.

use std::collections::HashSet;
use std::path::Path;

use cotrr_core::harness::{ManifestRecord, RecordError};
use cotrr_core::{EmbeddingStore, TaskKind};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("cannot read manifest {path}: {message}")]
    Read { path: String, message: String },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: {source}")]
    Invalid { line: usize, source: RecordError },
    #[error("line {line}: query_id `{query_id}` already used on line {first}")]
    DuplicateQuery {
        line: usize,
        query_id: String,
        first: usize,
    },
    #[error("line {line}: {field} id `{id}` is not in the image store")]
    UnknownId {
        line: usize,
        field: &'static str,
        id: String,
    },
    #[error("line {line}: task {found} does not match the profile task {expected}")]
    WrongTask {
        line: usize,
        found: TaskKind,
        expected: TaskKind,
    },
    #[error("manifest has no records")]
    Empty,
}

/// A record with the 1-based line it came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Numbered {
    pub line: usize,
    pub record: ManifestRecord,
}

/// Parses and validates every line; blank lines are skipped. Stops at the
/// first error.
pub fn parse_manifest(text: &str) -> Result<Vec<Numbered>, ManifestError> {
    let mut out = Vec::new();
    let mut seen: std::collections::HashMap<String, usize> = std::collections::HashMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let record: ManifestRecord = serde_json::from_str(raw).map_err(|e| ManifestError::Malformed {
            line,
            message: e.to_string(),
        })?;
        record
            .validate()
            .map_err(|source| ManifestError::Invalid { line, source })?;
        if let Some(&first) = seen.get(&record.query_id) {
            return Err(ManifestError::DuplicateQuery {
                line,
                query_id: record.query_id,
                first,
            });
        }
        seen.insert(record.query_id.clone(), line);
        out.push(Numbered { line, record });
    }
    if out.is_empty() {
        return Err(ManifestError::Empty);
    }
    Ok(out)
}

pub fn load_manifest(path: &Path) -> Result<Vec<Numbered>, ManifestError> {
    let text = std::fs::read_to_string(path).map_err(|e| ManifestError::Read {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_manifest(&text)
}

/// Every ground-truth and subset id must exist in the corpus.
pub fn check_against_store(records: &[Numbered], store: &EmbeddingStore) -> Result<(), ManifestError> {
    check_against_ids(records, &store.ids().iter().map(String::as_str).collect())
}

pub fn check_against_ids(records: &[Numbered], corpus: &HashSet<&str>) -> Result<(), ManifestError> {
    for n in records {
        for (field, id) in n.record.referenced_ids() {
            if !corpus.contains(id.as_str()) {
                return Err(ManifestError::UnknownId {
                    line: n.line,
                    field,
                    id: id.clone(),
                });
            }
        }
    }
    Ok(())
}

pub fn check_task(records: &[Numbered], expected: TaskKind) -> Result<(), ManifestError> {
    match records.iter().find(|n| n.record.task != expected) {
        Some(n) => Err(ManifestError::WrongTask {
            line: n.line,
            found: n.record.task,
            expected,
        }),
        None => Ok(()),
    }
}
