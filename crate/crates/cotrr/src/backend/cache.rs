//! Content-addressed response cache: one file per request digest.
//!
//! Layout: `<root>/<digest[0..2]>/<digest>`. Each file holds a short header
//! (format tag, model, creation time in Unix seconds), a blank line, then the
//! raw response text. Writes go to a temporary file in the same directory
//! and are renamed into place, so readers never see partial entries.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{SystemTime, UNIX_EPOCH};

const FORMAT_TAG: &str = "cotrr-cache v1";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CacheEntry {
    pub model: String,
    pub created: u64,
    pub text: String,
}

#[derive(Debug)]
pub struct DiskCache {
    root: PathBuf,
    counter: AtomicU64,
}

impl DiskCache {
    pub fn new(root: impl Into<PathBuf>) -> io::Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        Ok(Self {
            root,
            counter: AtomicU64::new(0),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn path(&self, key: &str) -> Option<PathBuf> {
        let valid = key.len() >= 2 && key.bytes().all(|b| b.is_ascii_hexdigit());
        valid.then(|| self.root.join(&key[..2]).join(key))
    }

    /// The stored entry, or `None` when absent or unreadable.
    pub fn get(&self, key: &str) -> Option<CacheEntry> {
        let raw = fs::read_to_string(self.path(key)?).ok()?;
        let (header, text) = raw.split_once("\n\n")?;
        let mut lines = header.lines();
        if lines.next()? != FORMAT_TAG {
            return None;
        }
        let model = lines.next()?.strip_prefix("model: ")?.to_string();
        let created = lines.next()?.strip_prefix("created: ")?.parse().ok()?;
        Some(CacheEntry {
            model,
            created,
            text: text.to_string(),
        })
    }

    pub fn put(&self, key: &str, model: &str, text: &str) -> io::Result<()> {
        let path = self
            .path(key)
            .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "cache key must be hex"))?;
        let dir = path.parent().expect("sharded path has a parent");
        fs::create_dir_all(dir)?;
        let created = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let model = model.replace('\n', " ");
        let body = format!("{FORMAT_TAG}\nmodel: {model}\ncreated: {created}\n\n{text}");
        let tmp = dir.join(format!(
            ".{key}.{}.{}.tmp",
            std::process::id(),
            self.counter.fetch_add(1, Ordering::Relaxed)
        ));
        fs::write(&tmp, body)?;
        fs::rename(&tmp, &path).inspect_err(|_| {
            let _ = fs::remove_file(&tmp);
        })
    }

    /// Evicts one entry. Missing entries are not an error.
    pub fn remove(&self, key: &str) -> io::Result<()> {
        let Some(path) = self.path(key) else {
            return Ok(());
        };
        match fs::remove_file(path) {
            Err(e) if e.kind() != io::ErrorKind::NotFound => Err(e),
            _ => Ok(()),
        }
    }
}
