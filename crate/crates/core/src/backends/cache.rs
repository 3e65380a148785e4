//! Append-only JSONL annotation cache with an in-memory index.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::{digest_fields, sha256_hex};

/// Content digest identifying one backend query.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CacheKey(String);

impl CacheKey {
    pub fn new(backend: &str, model: &str, prompt: &str, variant_text: &str) -> Self {
        Self(digest_fields(&[backend, model, prompt, variant_text]))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub key: CacheKey,
    pub backend: String,
    pub model: String,
    pub prompt_digest: String,
    pub variant_digest: String,
    pub raw: String,
    pub label: Option<String>,
    pub abstained: bool,
    #[serde(default)]
    pub latency_ms: u64,
    pub timestamp: u64,
}

impl CacheEntry {
    pub fn digests(prompt: &str, variant_text: &str) -> (String, String) {
        (sha256_hex(prompt), sha256_hex(variant_text))
    }
}

#[derive(Debug)]
pub struct AnnotationCache {
    path: PathBuf,
    index: RwLock<HashMap<CacheKey, CacheEntry>>,
    writer: Mutex<File>,
}

impl AnnotationCache {
    /// Open or create the cache file. A truncated trailing line (interrupted
    /// append) is skipped with a warning; any other malformed line is an error.
    pub fn open(path: &Path) -> Result<Self> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let mut index = HashMap::new();
        let text = if path.exists() {
            std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?
        } else {
            String::new()
        };
        let mut keep = text.len();
        let mut offset = 0;
        let lines: Vec<&str> = text.split_inclusive('\n').collect();
        for (i, raw) in lines.iter().enumerate() {
            let line_start = offset;
            offset += raw.len();
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            match serde_json::from_str::<CacheEntry>(line) {
                Ok(entry) => {
                    index.insert(entry.key.clone(), entry);
                }
                Err(e) if i + 1 == lines.len() => {
                    tracing::warn!(path = %path.display(), error = %e, "dropping truncated cache line");
                    keep = line_start;
                }
                Err(e) => return Err(Error::Cache(format!("{} line {}: {e}", path.display(), i + 1))),
            }
        }
        let mut writer = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        if keep < text.len() {
            writer.set_len(keep as u64).map_err(|e| Error::io(path, e))?;
        } else if !text.is_empty() && !text.ends_with('\n') {
            writer.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        Ok(Self {
            path: path.to_path_buf(),
            index: RwLock::new(index),
            writer: Mutex::new(writer),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn len(&self) -> usize {
        self.index.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, key: &CacheKey) -> Option<CacheEntry> {
        self.index.read().unwrap().get(key).cloned()
    }

    /// Append `entry` and index it. Appends are serialized.
    pub fn put(&self, entry: CacheEntry) -> Result<()> {
        let mut line = serde_json::to_string(&entry)?;
        line.push('\n');
        {
            let mut writer = self.writer.lock().unwrap();
            writer
                .write_all(line.as_bytes())
                .and_then(|_| writer.flush())
                .map_err(|e| Error::Cache(format!("{}: {e}", self.path.display())))?;
        }
        self.index.write().unwrap().insert(entry.key.clone(), entry);
        Ok(())
    }
}
