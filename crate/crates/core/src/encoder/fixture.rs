use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::protocol::{EncodeResponse, WireToken};
use super::{EncodeError, EncoderBackend, TokenEncoding};
use crate::text::nfc_sha256;

/// One line of an encoder fixture file: a protocol response plus its key.
#[derive(Debug, Serialize, Deserialize)]
struct FixtureLine {
    lang: String,
    sha256: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    text: Option<String>,
    #[serde(flatten)]
    response: EncodeResponse,
}

/// Encodings frozen in a file, keyed by language and SHA-256 of the NFC
/// text.
#[derive(Debug, Clone)]
pub struct FixtureEncoder {
    entries: HashMap<(String, String), EncodeResponse>,
    id: String,
}

impl FixtureEncoder {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, EncodeError> {
        let path = path.as_ref();
        let content = fs::read_to_string(path).map_err(|e| EncodeError::Fixture {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?;
        Self::from_str_named(&content, path)
    }

    fn from_str_named(content: &str, path: &Path) -> Result<Self, EncodeError> {
        let mut entries = HashMap::new();
        for (idx, line) in content.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parsed: FixtureLine = serde_json::from_str(line).map_err(|e| EncodeError::Fixture {
                path: path.to_path_buf(),
                msg: format!("line {}: {e}", idx + 1),
            })?;
            entries.insert((parsed.lang, parsed.sha256), parsed.response);
        }
        Ok(FixtureEncoder {
            entries,
            id: "fixture-file".into(),
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl EncoderBackend for FixtureEncoder {
    fn id(&self) -> &str {
        &self.id
    }

    fn encode(&self, lang: &str, text: &str) -> Result<TokenEncoding, EncodeError> {
        let hash = nfc_sha256(text);
        let response = self
            .entries
            .get(&(lang.to_string(), hash.clone()))
            .ok_or_else(|| EncodeError::FixtureMiss {
                lang: lang.to_string(),
                hash,
            })?;
        response.clone().into_encoding(lang, text, &self.id)
    }
}

/// Serializes an encoding as one fixture-file line (no trailing newline).
pub fn fixture_line(enc: &TokenEncoding) -> String {
    let line = FixtureLine {
        lang: enc.lang.clone(),
        sha256: nfc_sha256(&enc.text),
        text: Some(enc.text.clone()),
        response: EncodeResponse {
            dim: enc.dim,
            tokens: enc
                .tokens
                .iter()
                .map(|t| WireToken {
                    start: t.span.start,
                    end: t.span.end,
                    vec: t.vector.clone(),
                })
                .collect(),
        },
    };
    serde_json::to_string(&line).expect("serializable")
}
