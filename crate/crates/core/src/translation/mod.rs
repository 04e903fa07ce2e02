//! Translation fan-out.
//!
//! Every translation goes through a [`TranslationCache`]; engines are only
//! consulted on a miss. The offline [`FixtureEngine`] never answers, so a
//! miss against it is a hard error naming the missing key.

mod align;
mod cache;
mod engine;
mod views;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use align::{align_pair, AlignMethod, AlignedContext, MarkerStrategy, Sentinels};
pub use cache::{CacheError, CacheKey, TranslationCache};
pub use engine::{
    FixtureEngine, GoogleTranslateClient, LiveClientConfig, MicrosoftTranslatorClient, RetryPolicy, TokenBucket,
    TranslationEngine,
};
pub use views::{build_views, identity_view, ViewError, ViewsOutcome, TranslatedView};

use crate::text::nfc_sha256;

/// Engine identity. Nonempty and lowercase; `engine-a`, `engine-b` and
/// `fixture` are the conventional names, anything else is allowed.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct EngineId(String);

impl EngineId {
    pub fn new(name: impl Into<String>) -> Result<Self, TranslateError> {
        let name = name.into();
        if name.is_empty() || name.chars().any(|c| c.is_uppercase() || c.is_whitespace()) {
            return Err(TranslateError::InvalidEngineId(name));
        }
        Ok(EngineId(name))
    }

    pub fn fixture() -> Self {
        EngineId("fixture".into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for EngineId {
    type Error = TranslateError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        EngineId::new(s)
    }
}

impl From<EngineId> for String {
    fn from(id: EngineId) -> String {
        id.0
    }
}

impl fmt::Display for EngineId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranslationRecord {
    pub engine: EngineId,
    pub src_lang: String,
    pub tgt_lang: String,
    pub source_text: String,
    pub translated_text: String,
    /// RFC 3339 timestamp of the engine call that produced the record.
    pub fetched_at: String,
}

impl TranslationRecord {
    pub fn key(&self) -> CacheKey {
        CacheKey::new(&self.engine, &self.src_lang, &self.tgt_lang, &self.source_text)
    }
}

#[derive(Debug, Error)]
pub enum TranslateError {
    #[error("invalid engine id {0:?}")]
    InvalidEngineId(String),
    #[error("source and target language are both {0:?}")]
    SameLanguage(String),
    #[error("fixture miss: engine={engine} {src}->{tgt} sha256={hash}")]
    FixtureMiss {
        engine: EngineId,
        src: String,
        tgt: String,
        hash: String,
    },
    #[error("engine {engine} unreachable: {msg}")]
    Unreachable { engine: EngineId, msg: String },
    #[error("engine {engine} rate limited after {attempts} attempts (retry after {retry_after_ms} ms)")]
    RateLimited {
        engine: EngineId,
        attempts: u32,
        retry_after_ms: u64,
    },
    #[error("engine {engine} returned an unusable response: {msg}")]
    BadResponse { engine: EngineId, msg: String },
    #[error(transparent)]
    Cache(#[from] CacheError),
}

impl TranslateError {
    /// True for failures of an external service, as opposed to bad input.
    pub fn is_external(&self) -> bool {
        matches!(
            self,
            TranslateError::FixtureMiss { .. }
                | TranslateError::Unreachable { .. }
                | TranslateError::RateLimited { .. }
                | TranslateError::BadResponse { .. }
        )
    }
}

/// Cached translation of `text`. A hit returns the stored record untouched.
pub fn translate(
    engine: &dyn TranslationEngine,
    src_lang: &str,
    tgt_lang: &str,
    text: &str,
    cache: &TranslationCache,
) -> Result<TranslationRecord, TranslateError> {
    if src_lang == tgt_lang {
        return Err(TranslateError::SameLanguage(src_lang.to_string()));
    }
    let key = CacheKey::new(engine.id(), src_lang, tgt_lang, text);
    if let Some(hit) = cache.get(&key) {
        return Ok(hit);
    }
    let translated = engine.fetch(src_lang, tgt_lang, text)?;
    if translated.trim().is_empty() {
        return Err(TranslateError::BadResponse {
            engine: engine.id().clone(),
            msg: "empty translation".into(),
        });
    }
    let record = TranslationRecord {
        engine: engine.id().clone(),
        src_lang: src_lang.to_string(),
        tgt_lang: tgt_lang.to_string(),
        source_text: text.to_string(),
        translated_text: translated,
        fetched_at: chrono::Utc::now().to_rfc3339(),
    };
    Ok(cache.insert(record)?)
}

/// Translation of a single word, outside any context.
pub fn translate_word(
    engine: &dyn TranslationEngine,
    src_lang: &str,
    tgt_lang: &str,
    word: &str,
    cache: &TranslationCache,
) -> Result<TranslationRecord, TranslateError> {
    translate(engine, src_lang, tgt_lang, word.trim(), cache)
}

pub(crate) fn fixture_miss(engine: &EngineId, src: &str, tgt: &str, text: &str) -> TranslateError {
    TranslateError::FixtureMiss {
        engine: engine.clone(),
        src: src.to_string(),
        tgt: tgt.to_string(),
        hash: nfc_sha256(text),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const PRISON: &str = "Her prison cell was almost an improvement over her room at the last hostel";

    fn primed() -> TranslationCache {
        let cache = TranslationCache::in_memory();
        for (tgt, src, out) in [
            ("pt", PRISON, "A cela da prisão era quase uma melhoria em relação ao quarto dela no último albergue"),
            ("pt", "room", "quarto"),
            ("it", "cell", "cella"),
        ] {
            cache
                .insert(TranslationRecord {
                    engine: EngineId::fixture(),
                    src_lang: "en".into(),
                    tgt_lang: tgt.into(),
                    source_text: src.into(),
                    translated_text: out.into(),
                    fetched_at: "2020-01-01T00:00:00+00:00".into(),
                })
                .unwrap();
        }
        cache
    }

    #[test]
    fn primed_sentence_hits_cache() {
        let cache = primed();
        let engine = FixtureEngine::new();
        let rec = translate(&engine, "en", "pt", PRISON, &cache).unwrap();
        assert!(rec.translated_text.contains("cela"));
        assert!(rec.translated_text.contains("quarto"));
        let again = translate(&engine, "en", "pt", PRISON, &cache).unwrap();
        assert_eq!(rec, again);
    }

    #[test]
    fn word_translations() {
        let cache = primed();
        let engine = FixtureEngine::new();
        assert_eq!(translate_word(&engine, "en", "it", "cell", &cache).unwrap().translated_text, "cella");
        assert_eq!(translate_word(&engine, "en", "pt", "room", &cache).unwrap().translated_text, "quarto");
        let err = translate_word(&engine, "en", "pt", "hostel", &cache).unwrap_err();
        assert!(matches!(err, TranslateError::FixtureMiss { .. }));
    }

    #[test]
    fn fixture_miss_names_the_key() {
        let cache = TranslationCache::in_memory();
        let err = translate(&FixtureEngine::new(), "en", "de", "hello", &cache).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("fixture"), "{msg}");
        assert!(msg.contains("en->de"), "{msg}");
        assert!(msg.contains(&nfc_sha256("hello")), "{msg}");
    }

    #[test]
    fn engine_id_validation() {
        assert!(EngineId::new("engine-a").is_ok());
        assert!(EngineId::new("").is_err());
        assert!(EngineId::new("Google").is_err());
    }

    #[test]
    fn same_language_rejected() {
        let cache = TranslationCache::in_memory();
        assert!(matches!(
            translate(&FixtureEngine::new(), "en", "en", "x", &cache),
            Err(TranslateError::SameLanguage(_))
        ));
    }
}
