//! Transparent response cache keyed by request digest, persisted as
//! append-only JSONL records. Completion calls are the cost center; caching
//! makes ablation and repeat runs resumable.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::{
    BackendError, CompletionBackend, CompletionRequest, CompletionResult, FinishReason,
};

/// One persisted cache line.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CacheRecord {
    pub request_digest: String,
    pub model_name: String,
    pub response_text: String,
    pub finish_reason: FinishReason,
    pub timestamp: u64,
}

struct CacheState {
    entries: HashMap<String, CacheRecord>,
    file: File,
}

/// Append-only cache over (request digest, model name).
pub struct ResponseCache {
    path: PathBuf,
    state: Mutex<CacheState>,
}

fn entry_key(digest: &str, model: &str) -> String {
    format!("{digest}\u{1f}{model}")
}

impl ResponseCache {
    /// Open or create the cache file, replaying any existing records.
    /// Malformed lines (e.g. a truncated tail after an interrupted run) are
    /// skipped.
    pub fn open(path: &Path) -> Result<Self, BackendError> {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent)?;
            }
        }
        let mut entries = HashMap::new();
        if path.exists() {
            let reader = BufReader::new(File::open(path)?);
            for line in reader.lines() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                if let Ok(record) = serde_json::from_str::<CacheRecord>(&line) {
                    entries.insert(
                        entry_key(&record.request_digest, &record.model_name),
                        record,
                    );
                }
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self {
            path: path.to_path_buf(),
            state: Mutex::new(CacheState { entries, file }),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn len(&self) -> usize {
        self.state.lock().unwrap().entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, digest: &str, model: &str) -> Option<CacheRecord> {
        self.state
            .lock()
            .unwrap()
            .entries
            .get(&entry_key(digest, model))
            .cloned()
    }

    pub fn put(&self, record: CacheRecord) -> Result<(), BackendError> {
        let mut state = self.state.lock().unwrap();
        let line = serde_json::to_string(&record).expect("record serializes");
        writeln!(state.file, "{line}")?;
        state.file.flush()?;
        state.entries.insert(
            entry_key(&record.request_digest, &record.model_name),
            record,
        );
        Ok(())
    }
}

/// Wraps any backend with the response cache. Hits return with zero
/// latency; misses call through and persist the result.
pub struct CachedBackend {
    inner: Arc<dyn CompletionBackend>,
    cache: ResponseCache,
}

impl CachedBackend {
    pub fn open(inner: Arc<dyn CompletionBackend>, path: &Path) -> Result<Self, BackendError> {
        Ok(Self {
            inner,
            cache: ResponseCache::open(path)?,
        })
    }

    pub fn cache(&self) -> &ResponseCache {
        &self.cache
    }
}

impl CompletionBackend for CachedBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, BackendError> {
        let digest = request.digest();
        let model = self.inner.model_name();
        if let Some(record) = self.cache.get(&digest, model) {
            return Ok(CompletionResult {
                text: record.response_text,
                finish_reason: record.finish_reason,
                latency_ms: 0,
            });
        }
        let result = self.inner.complete(request)?;
        self.cache.put(CacheRecord {
            request_digest: digest,
            model_name: model.to_string(),
            response_text: result.text.clone(),
            finish_reason: result.finish_reason,
            timestamp: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        })?;
        Ok(result)
    }

    fn model_name(&self) -> &str {
        self.inner.model_name()
    }
}
