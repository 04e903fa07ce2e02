//! Contextual token vectors and the contextual cosine channel.
//!
//! A backend turns a sentence into per-token vectors with character
//! offsets. Three backends exist: a client for the line-delimited JSON
//! sidecar protocol, a frozen fixture file, and a seeded hash backend that
//! needs no model at all. Whatever the backend, [`encode`] re-checks every
//! [`TokenEncoding`] invariant before the result can be used.
//!
//! Word vectors are the mean of all tokens whose spans intersect the word.
//! Similarity between two words of one sentence is the cosine of their word
//! vectors; cosine is an assumption carried over from the static channel.

mod fixture;
mod protocol;
mod synthetic;

use std::path::PathBuf;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use fixture::{fixture_line, FixtureEncoder};
pub use protocol::{Endpoint, EncodeResponse, Hello, ProtocolClient, WireToken};
pub use synthetic::SyntheticHashEncoder;

use crate::text::{char_len, CharSpan};
use crate::vector::cosine;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Token {
    pub span: CharSpan,
    pub vector: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenEncoding {
    pub lang: String,
    pub text: String,
    pub tokens: Vec<Token>,
    pub dim: usize,
    pub backend_id: String,
}

impl TokenEncoding {
    /// Every violated invariant, as human-readable diagnostics.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.dim == 0 {
            out.push("dim must be positive".to_string());
        }
        let len = char_len(&self.text);
        let mut prev_end = 0usize;
        for (i, tok) in self.tokens.iter().enumerate() {
            let CharSpan { start, end } = tok.span;
            if start >= end {
                out.push(format!("token {i}: empty or inverted span [{start},{end})"));
            }
            if end > len {
                out.push(format!("token {i}: end {end} beyond text length {len}"));
            }
            if start < prev_end {
                out.push(format!("token {i}: starts at {start} before previous end {prev_end}"));
            }
            prev_end = prev_end.max(end);
            if tok.vector.len() != self.dim {
                out.push(format!("token {i}: vector length {} != dim {}", tok.vector.len(), self.dim));
            }
            if tok.vector.iter().any(|v| !v.is_finite()) {
                out.push(format!("token {i}: non-finite component"));
            }
        }
        out
    }

    pub fn validate(&self) -> Result<(), EncodeError> {
        let diagnostics = self.violations();
        if diagnostics.is_empty() {
            Ok(())
        } else {
            Err(EncodeError::ProtocolViolation { diagnostics })
        }
    }
}

#[derive(Debug, Error)]
pub enum EncodeError {
    #[error("cannot encode empty text")]
    EmptyText,
    #[error("encoder unreachable: {0}")]
    Unreachable(String),
    #[error("encoder timed out after {0:?}")]
    Timeout(Duration),
    #[error("encoder fixture miss: lang={lang} sha256={hash}")]
    FixtureMiss { lang: String, hash: String },
    #[error("protocol violation: {}", diagnostics.join("; "))]
    ProtocolViolation { diagnostics: Vec<String> },
    #[error("encoder error {code}: {msg}")]
    Remote { code: String, msg: String },
    #[error("cannot read encoder fixture {path}: {msg}")]
    Fixture { path: PathBuf, msg: String },
}

impl EncodeError {
    /// Failures that mean the encoder service itself is unavailable.
    pub fn is_service_failure(&self) -> bool {
        matches!(self, EncodeError::Unreachable(_) | EncodeError::Timeout(_))
    }
}

pub trait EncoderBackend: Send + Sync {
    fn id(&self) -> &str;
    fn encode(&self, lang: &str, text: &str) -> Result<TokenEncoding, EncodeError>;
}

/// Encodes through any backend and enforces the [`TokenEncoding`] contract.
pub fn encode(backend: &dyn EncoderBackend, lang: &str, text: &str) -> Result<TokenEncoding, EncodeError> {
    if text.trim().is_empty() {
        return Err(EncodeError::EmptyText);
    }
    let enc = backend.encode(lang, text)?;
    if enc.text != text {
        return Err(EncodeError::ProtocolViolation {
            diagnostics: vec!["encoding refers to a different text".into()],
        });
    }
    enc.validate()?;
    Ok(enc)
}

/// Declarative backend choice, as found in run configurations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BackendConfig {
    ProtocolClient {
        /// `tcp://host:port` or `stdio:<command> [args...]`.
        endpoint: String,
        #[serde(default = "default_in_flight")]
        max_in_flight: usize,
        #[serde(default = "default_timeout_secs")]
        timeout_secs: u64,
    },
    FixtureFile {
        path: PathBuf,
    },
    SyntheticHash {
        dim: usize,
        seed: u64,
    },
}

fn default_in_flight() -> usize {
    4
}

fn default_timeout_secs() -> u64 {
    60
}

impl BackendConfig {
    pub fn build(&self) -> Result<Box<dyn EncoderBackend>, EncodeError> {
        Ok(match self {
            BackendConfig::ProtocolClient {
                endpoint,
                max_in_flight,
                timeout_secs,
            } => Box::new(ProtocolClient::connect(
                endpoint.parse()?,
                *max_in_flight,
                Duration::from_secs(*timeout_secs),
            )?),
            BackendConfig::FixtureFile { path } => Box::new(FixtureEncoder::load(path)?),
            BackendConfig::SyntheticHash { dim, seed } => Box::new(SyntheticHashEncoder::new(*dim, *seed)),
        })
    }
}

/// Mean vector of the tokens intersecting `span`; `None` if none do.
pub fn word_vector(enc: &TokenEncoding, span: CharSpan) -> Option<Vec<f64>> {
    let mut sum = vec![0.0f64; enc.dim];
    let mut n = 0usize;
    for tok in enc.tokens.iter().filter(|t| t.span.overlaps(&span)) {
        for (s, v) in sum.iter_mut().zip(&tok.vector) {
            *s += v;
        }
        n += 1;
    }
    if n == 0 {
        return None;
    }
    let n = n as f64;
    sum.iter_mut().for_each(|s| *s /= n);
    Some(sum)
}

/// Cosine between the contextual vectors of two words of the same sentence.
pub fn bert_similarity(enc: &TokenEncoding, span1: CharSpan, span2: CharSpan) -> Option<f64> {
    cosine(&word_vector(enc, span1)?, &word_vector(enc, span2)?)
}
