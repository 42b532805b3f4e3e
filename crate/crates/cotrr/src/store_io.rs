//! Embedding stores on disk: a `CTRREMB1` vector file plus a `.ids` sidecar.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use cotrr_core::store::{encode_ids, encode_vectors};
use cotrr_core::{EmbeddingStore, StoreError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StoreIoError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: io::Error },
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: io::Error },
    #[error("{path} is not valid UTF-8")]
    NotUtf8 { path: PathBuf },
    #[error("{path}: {source}")]
    Format { path: PathBuf, source: StoreError },
}

/// The sidecar id file for a vector file: the same path with `.ids` appended.
pub fn ids_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".ids");
    PathBuf::from(name)
}

pub fn load_store(path: &Path) -> Result<EmbeddingStore, StoreIoError> {
    let bytes = fs::read(path).map_err(|source| StoreIoError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    let sidecar = ids_path(path);
    let ids_bytes = fs::read(&sidecar).map_err(|source| StoreIoError::Read {
        path: sidecar.clone(),
        source,
    })?;
    let ids_text = String::from_utf8(ids_bytes).map_err(|_| StoreIoError::NotUtf8 { path: sidecar })?;
    EmbeddingStore::decode(&bytes, &ids_text).map_err(|source| StoreIoError::Format {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes `data` (row-major, `ids.len()` rows of `dim`) and its sidecar.
/// Rows are written as given; normalization happens on load.
pub fn write_store<S: AsRef<str>>(path: &Path, ids: &[S], dim: usize, data: &[f32]) -> Result<(), StoreIoError> {
    let write = |p: &Path, bytes: &[u8]| {
        fs::write(p, bytes).map_err(|source| StoreIoError::Write {
            path: p.to_path_buf(),
            source,
        })
    };
    write(path, &encode_vectors(dim, data))?;
    write(&ids_path(path), encode_ids(ids).as_bytes())
}
