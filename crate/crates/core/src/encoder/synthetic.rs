use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::{EncodeError, EncoderBackend, Token, TokenEncoding};
use crate::text::CharSpan;

/// Model-free backend. Tokens are whitespace-separated runs; each token's
/// vector is a unit vector drawn from a generator seeded by a hash of
/// (seed, language, position, token text). The output is a pure function
/// of `(text, lang, dim, seed)`.
#[derive(Debug, Clone)]
pub struct SyntheticHashEncoder {
    dim: usize,
    seed: u64,
    id: String,
}

impl SyntheticHashEncoder {
    pub fn new(dim: usize, seed: u64) -> Self {
        SyntheticHashEncoder {
            dim,
            seed,
            id: format!("synthetic-hash:dim={dim}:seed={seed}"),
        }
    }

    fn token_vector(&self, lang: &str, position: usize, token: &str) -> Vec<f64> {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(lang.as_bytes());
        h.update([0]);
        h.update((position as u64).to_le_bytes());
        h.update(token.as_bytes());
        let mut rng = ChaCha8Rng::from_seed(h.finalize().into());
        loop {
            let v: Vec<f64> = (0..self.dim).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-12 {
                return v.into_iter().map(|x| x / norm).collect();
            }
        }
    }
}

fn whitespace_tokens(text: &str) -> Vec<(CharSpan, String)> {
    let mut out = Vec::new();
    let mut current: Option<(usize, String)> = None;
    let mut idx = 0;
    for c in text.chars() {
        if c.is_whitespace() {
            if let Some((start, tok)) = current.take() {
                out.push((CharSpan::new(start, idx), tok));
            }
        } else {
            current.get_or_insert_with(|| (idx, String::new())).1.push(c);
        }
        idx += 1;
    }
    if let Some((start, tok)) = current {
        out.push((CharSpan::new(start, idx), tok));
    }
    out
}

impl EncoderBackend for SyntheticHashEncoder {
    fn id(&self) -> &str {
        &self.id
    }

    fn encode(&self, lang: &str, text: &str) -> Result<TokenEncoding, EncodeError> {
        if self.dim == 0 {
            return Err(EncodeError::ProtocolViolation {
                diagnostics: vec!["dim must be positive".into()],
            });
        }
        let tokens = whitespace_tokens(text)
            .into_iter()
            .enumerate()
            .map(|(pos, (span, tok))| Token {
                span,
                vector: self.token_vector(lang, pos, &tok),
            })
            .collect();
        Ok(TokenEncoding {
            lang: lang.to_string(),
            text: text.to_string(),
            tokens,
            dim: self.dim,
            backend_id: self.id.clone(),
        })
    }
}
