use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{EngineId, TranslationRecord};
use crate::text::nfc_sha256;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CacheKey {
    pub engine: EngineId,
    pub src: String,
    pub tgt: String,
    pub sha256: String,
}

impl CacheKey {
    pub fn new(engine: &EngineId, src: &str, tgt: &str, text: &str) -> Self {
        CacheKey {
            engine: engine.clone(),
            src: src.to_string(),
            tgt: tgt.to_string(),
            sha256: nfc_sha256(text),
        }
    }
}

#[derive(Debug, Error)]
pub enum CacheError {
    #[error("translation cache I/O on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("translation cache {path} line {line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },
    #[error("conflicting translations for {engine} {src}->{tgt} sha256={sha256}")]
    Conflict {
        engine: EngineId,
        src: String,
        tgt: String,
        sha256: String,
    },
}

/// One line of the append-only cache file.
#[derive(Debug, Serialize, Deserialize)]
struct CacheLine {
    engine: EngineId,
    src: String,
    tgt: String,
    sha256: String,
    source_text: String,
    translated_text: String,
    timestamp: String,
}

impl CacheLine {
    fn from_record(r: &TranslationRecord) -> Self {
        CacheLine {
            engine: r.engine.clone(),
            src: r.src_lang.clone(),
            tgt: r.tgt_lang.clone(),
            sha256: nfc_sha256(&r.source_text),
            source_text: r.source_text.clone(),
            translated_text: r.translated_text.clone(),
            timestamp: r.fetched_at.clone(),
        }
    }

    fn into_record(self) -> TranslationRecord {
        TranslationRecord {
            engine: self.engine,
            src_lang: self.src,
            tgt_lang: self.tgt,
            source_text: self.source_text,
            translated_text: self.translated_text,
            fetched_at: self.timestamp,
        }
    }
}

/// Translation cache keyed by (engine, source language, target language,
/// SHA-256 of the NFC source text).
///
/// Readers run concurrently. An insert for an existing key is a no-op when
/// the translated text is identical and an integrity error otherwise. When
/// backed by a file, every new record is appended immediately.
#[derive(Debug)]
pub struct TranslationCache {
    entries: RwLock<HashMap<CacheKey, TranslationRecord>>,
    sink: Option<(PathBuf, Mutex<File>)>,
}

impl TranslationCache {
    pub fn in_memory() -> Self {
        TranslationCache {
            entries: RwLock::new(HashMap::new()),
            sink: None,
        }
    }

    /// Opens (or creates) a cache file and loads every record in it.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, CacheError> {
        let path = path.as_ref().to_path_buf();
        let io_err = |source| CacheError::Io {
            path: path.clone(),
            source,
        };
        let cache = TranslationCache::in_memory();
        if path.exists() {
            let content = fs::read_to_string(&path).map_err(io_err)?;
            cache.load_lines(&content, &path)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(&path).map_err(io_err)?;
        Ok(TranslationCache {
            entries: cache.entries,
            sink: Some((path, Mutex::new(file))),
        })
    }

    /// Read-only view of a cache file; nothing is ever written back.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, CacheError> {
        let path = path.as_ref();
        let content = fs::read_to_string(path).map_err(|source| CacheError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let cache = TranslationCache::in_memory();
        cache.load_lines(&content, path)?;
        Ok(cache)
    }

    fn load_lines(&self, content: &str, path: &Path) -> Result<(), CacheError> {
        for (idx, line) in content.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parse_err = |msg: String| CacheError::Parse {
                path: path.to_path_buf(),
                line: idx + 1,
                msg,
            };
            let parsed: CacheLine = serde_json::from_str(line).map_err(|e| parse_err(e.to_string()))?;
            if parsed.sha256 != nfc_sha256(&parsed.source_text) {
                return Err(parse_err("sha256 does not match source_text".into()));
            }
            self.insert_in_memory(parsed.into_record())?;
        }
        Ok(())
    }

    pub fn get(&self, key: &CacheKey) -> Option<TranslationRecord> {
        self.entries.read().expect("cache lock").get(key).cloned()
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Returns `(stored record, newly inserted)`.
    fn insert_in_memory(&self, record: TranslationRecord) -> Result<(TranslationRecord, bool), CacheError> {
        let key = record.key();
        let mut entries = self.entries.write().expect("cache lock");
        if let Some(existing) = entries.get(&key) {
            if existing.translated_text != record.translated_text {
                return Err(CacheError::Conflict {
                    engine: key.engine,
                    src: key.src,
                    tgt: key.tgt,
                    sha256: key.sha256,
                });
            }
            return Ok((existing.clone(), false));
        }
        entries.insert(key, record.clone());
        Ok((record, true))
    }

    /// Stores a record and returns the cached version of it.
    pub fn insert(&self, record: TranslationRecord) -> Result<TranslationRecord, CacheError> {
        let (stored, fresh) = self.insert_in_memory(record)?;
        if fresh {
            if let Some((path, file)) = &self.sink {
                let mut line = serde_json::to_string(&CacheLine::from_record(&stored)).expect("serializable");
                line.push('\n');
                let mut f = file.lock().expect("cache file lock");
                f.write_all(line.as_bytes()).map_err(|source| CacheError::Io {
                    path: path.clone(),
                    source,
                })?;
            }
        }
        Ok(stored)
    }

    /// All records ordered by key.
    pub fn records(&self) -> Vec<TranslationRecord> {
        let entries = self.entries.read().expect("cache lock");
        let mut keys: Vec<&CacheKey> = entries.keys().collect();
        keys.sort();
        keys.into_iter().map(|k| entries[k].clone()).collect()
    }

    /// Writes a deduplicated, key-ordered copy of the cache.
    pub fn compact_to(&self, path: impl AsRef<Path>) -> Result<(), CacheError> {
        let path = path.as_ref();
        let io_err = |source| CacheError::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
        for rec in self.records() {
            let line = serde_json::to_string(&CacheLine::from_record(&rec)).expect("serializable");
            writeln!(w, "{line}").map_err(io_err)?;
        }
        w.flush().map_err(io_err)
    }
}
