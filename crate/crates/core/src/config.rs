//! Run configuration shared by scoring and the experiment drivers.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::encoder::BackendConfig;
use crate::translation::EngineId;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("weights must be finite and non-negative (alpha={alpha}, beta={beta})")]
    NegativeWeight { alpha: f64, beta: f64 },
    #[error("alpha + beta must be positive")]
    ZeroWeights,
    #[error("invalid language code {0:?}")]
    BadLanguage(String),
}

/// Weights, extra languages, engine and encoder backend of one run.
///
/// `languages` lists the *extra* languages only. Each instance is always
/// scored in its own source language too, see [`effective_languages`].
///
/// [`effective_languages`]: ExperimentConfig::effective_languages
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Weight of the contextual channel.
    pub alpha: f64,
    /// Weight of the static-embedding channel.
    pub beta: f64,
    #[serde(default)]
    pub languages: Vec<String>,
    pub engine: EngineId,
    pub backend: BackendConfig,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let ok = |w: f64| w.is_finite() && w >= 0.0;
        if !ok(self.alpha) || !ok(self.beta) {
            return Err(ConfigError::NegativeWeight {
                alpha: self.alpha,
                beta: self.beta,
            });
        }
        if self.alpha + self.beta <= 0.0 {
            return Err(ConfigError::ZeroWeights);
        }
        for l in &self.languages {
            if !is_language_code(l) {
                return Err(ConfigError::BadLanguage(l.clone()));
            }
        }
        Ok(())
    }

    /// `source` followed by the extra languages, duplicates dropped.
    pub fn effective_languages(&self, source: &str) -> Vec<String> {
        effective_languages(source, &self.languages)
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn with_weights(&self, alpha: f64, beta: f64) -> Self {
        ExperimentConfig {
            alpha,
            beta,
            ..self.clone()
        }
    }

    pub fn with_languages(&self, languages: Vec<String>) -> Self {
        ExperimentConfig {
            languages,
            ..self.clone()
        }
    }
}

pub fn effective_languages(source: &str, extras: &[String]) -> Vec<String> {
    let mut out = vec![source.to_string()];
    for l in extras {
        if !out.contains(l) {
            out.push(l.clone());
        }
    }
    out
}

/// Lowercase ASCII letters, optionally followed by `-` and a region
/// subtag.
pub fn is_language_code(code: &str) -> bool {
    let mut parts = code.splitn(2, '-');
    let primary = parts.next().unwrap_or_default();
    let primary_ok = (2..=3).contains(&primary.len()) && primary.bytes().all(|b| b.is_ascii_lowercase());
    let region_ok = parts
        .next()
        .is_none_or(|r| !r.is_empty() && r.bytes().all(|b| b.is_ascii_alphanumeric()));
    primary_ok && region_ok
}
