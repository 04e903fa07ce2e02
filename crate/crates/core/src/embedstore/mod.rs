//! Static word vectors per language and the context-free cosine channel.

mod binary;

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use binary::{compile_binary, open_binary, FORMAT_VERSION};

use crate::vector::cosine;

/// Share of malformed rows above which loading aborts.
const MAX_BAD_ROW_SHARE: f64 = 0.001;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Casing {
    #[default]
    Lower,
    Preserve,
}

impl Casing {
    pub fn apply(&self, word: &str) -> String {
        match self {
            Casing::Lower => word.to_lowercase(),
            Casing::Preserve => word.to_string(),
        }
    }
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {bad} of {total} rows have the wrong dimensionality (expected {dim})")]
    InconsistentDim {
        path: PathBuf,
        dim: usize,
        bad: usize,
        total: usize,
    },
    #[error("{path}: no vectors found")]
    NoVectors { path: PathBuf },
    #[error("{path}: unsupported format version {found} (expected {expected})")]
    VersionMismatch { path: PathBuf, found: u32, expected: u32 },
    #[error("{path}: checksum mismatch")]
    Checksum { path: PathBuf },
    #[error("{path}: malformed binary store: {msg}")]
    Malformed { path: PathBuf, msg: String },
    #[error("invalid vector for {word:?}: {msg}")]
    InvalidVector { word: String, msg: String },
}

/// Word vectors for one language. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorStore {
    lang: String,
    dim: usize,
    casing: Casing,
    index: HashMap<String, usize>,
    data: Vec<f32>,
}

impl VectorStore {
    pub fn new(lang: impl Into<String>, dim: usize, casing: Casing) -> Self {
        VectorStore {
            lang: lang.into(),
            dim,
            casing,
            index: HashMap::new(),
            data: Vec::new(),
        }
    }

    /// Adds a vector. Returns `false` (and keeps the existing vector) when
    /// the normalized word is already present.
    pub fn insert(&mut self, word: &str, vector: &[f32]) -> Result<bool, StoreError> {
        if vector.len() != self.dim {
            return Err(StoreError::InvalidVector {
                word: word.into(),
                msg: format!("length {} != dim {}", vector.len(), self.dim),
            });
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(StoreError::InvalidVector {
                word: word.into(),
                msg: "non-finite component".into(),
            });
        }
        let key = self.casing.apply(word);
        if self.index.contains_key(&key) {
            return Ok(false);
        }
        self.index.insert(key, self.index.len());
        self.data.extend_from_slice(vector);
        Ok(true)
    }

    pub fn lang(&self) -> &str {
        &self.lang
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn casing(&self) -> Casing {
        self.casing
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn get(&self, word: &str) -> Option<&[f32]> {
        let row = *self.index.get(&self.casing.apply(word))?;
        Some(&self.data[row * self.dim..(row + 1) * self.dim])
    }

    /// Stored words (already case-normalized), sorted.
    pub fn words(&self) -> Vec<&str> {
        let mut w: Vec<&str> = self.index.keys().map(String::as_str).collect();
        w.sort_unstable();
        w
    }
}

/// Counters from [`load_text_vectors`].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub rows_read: usize,
    pub malformed: usize,
    pub duplicates: usize,
    pub header: Option<(usize, usize)>,
}

fn parse_header(line: &str) -> Option<(usize, usize)> {
    let mut fields = line.split_whitespace();
    let count = fields.next()?.parse().ok()?;
    let dim = fields.next()?.parse().ok()?;
    fields.next().is_none().then_some((count, dim))
}

fn parse_row(line: &str) -> Option<(&str, Vec<f32>)> {
    let mut fields = line.trim_end().split(' ');
    let word = fields.next().filter(|w| !w.is_empty())?;
    let values: Option<Vec<f32>> = fields
        .map(|f| f.parse::<f32>().ok().filter(|v| v.is_finite()))
        .collect();
    Some((word, values?))
}

/// Reads the word2vec text format: an optional `count dim` header, then
/// `word v1 ... vdim` per line. At most `limit` vectors are kept; later
/// duplicates of a word are ignored.
pub fn load_text_vectors(
    path: impl AsRef<Path>,
    lang: &str,
    limit: Option<usize>,
    casing: Casing,
) -> Result<(VectorStore, LoadReport), StoreError> {
    let path = path.as_ref();
    let io_err = |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    };
    let reader = BufReader::new(File::open(path).map_err(io_err)?);
    let mut report = LoadReport::default();
    let mut store: Option<VectorStore> = None;
    let mut expected_dim: Option<usize> = None;

    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        if idx == 0 {
            if let Some(h) = parse_header(&line) {
                report.header = Some(h);
                expected_dim = Some(h.1);
                continue;
            }
        }
        if limit.is_some_and(|l| store.as_ref().map_or(0, VectorStore::len) >= l) {
            break;
        }
        report.rows_read += 1;
        let Some((word, values)) = parse_row(&line) else {
            report.malformed += 1;
            continue;
        };
        let dim = *expected_dim.get_or_insert(values.len());
        if values.len() != dim || dim == 0 {
            report.malformed += 1;
            continue;
        }
        let store = store.get_or_insert_with(|| VectorStore::new(lang, dim, casing));
        if !store.insert(word, &values)? {
            report.duplicates += 1;
        }
    }

    if report.malformed as f64 > MAX_BAD_ROW_SHARE * report.rows_read as f64 {
        return Err(StoreError::InconsistentDim {
            path: path.to_path_buf(),
            dim: expected_dim.unwrap_or(0),
            bad: report.malformed,
            total: report.rows_read,
        });
    }
    if report.malformed > 0 {
        log::warn!("{}: skipped {} malformed rows", path.display(), report.malformed);
    }
    let store = match (store, expected_dim) {
        (Some(s), _) => s,
        (None, Some(dim)) if dim > 0 => VectorStore::new(lang, dim, casing),
        _ => return Err(StoreError::NoVectors { path: path.to_path_buf() }),
    };
    Ok((store, report))
}

/// Cosine of the two words' vectors after the store's casing policy.
/// `None` when either word is missing or has a zero vector.
pub fn we_similarity(store: &VectorStore, w1: &str, w2: &str) -> Option<f64> {
    cosine(store.get(w1)?, store.get(w2)?)
}
