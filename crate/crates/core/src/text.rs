//! Character-indexed spans and the text normalizations shared by the
//! dataset, alignment and encoder modules.
//!
//! All offsets in this crate count Unicode scalar values, never bytes.

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

/// Half-open character interval `[start, end)`.
///
/// Serialized as a two-element integer array.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "(usize, usize)", into = "(usize, usize)")]
pub struct CharSpan {
    pub start: usize,
    pub end: usize,
}

impl CharSpan {
    pub const fn new(start: usize, end: usize) -> Self {
        CharSpan { start, end }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn overlaps(&self, other: &CharSpan) -> bool {
        self.start < other.end && other.start < self.end
    }

    /// True when `start < end <= text_len`.
    pub fn fits(&self, text_len: usize) -> bool {
        self.start < self.end && self.end <= text_len
    }
}

impl From<(usize, usize)> for CharSpan {
    fn from((start, end): (usize, usize)) -> Self {
        CharSpan { start, end }
    }
}

impl From<CharSpan> for (usize, usize) {
    fn from(span: CharSpan) -> Self {
        (span.start, span.end)
    }
}

impl fmt::Display for CharSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{})", self.start, self.end)
    }
}

pub fn char_len(text: &str) -> usize {
    text.chars().count()
}

/// Substring addressed by character offsets, or `None` when out of range.
pub fn slice_chars(text: &str, span: CharSpan) -> Option<&str> {
    if span.start > span.end {
        return None;
    }
    let start = byte_offset(text, span.start)?;
    let end = byte_offset(text, span.end)?;
    Some(&text[start..end])
}

fn byte_offset(text: &str, char_idx: usize) -> Option<usize> {
    if char_idx == 0 {
        return Some(0);
    }
    match text.char_indices().nth(char_idx) {
        Some((b, _)) => Some(b),
        None if char_len(text) == char_idx => Some(text.len()),
        None => None,
    }
}

/// Hex SHA-256 of the NFC form of `text`.
pub fn nfc_sha256(text: &str) -> String {
    let nfc: String = text.nfc().collect();
    hex::encode(Sha256::digest(nfc.as_bytes()))
}

/// Case- and diacritic-folded form of a string: NFD, combining marks
/// dropped, lowercased. Used for matching only.
pub fn fold(text: &str) -> String {
    text.nfd()
        .filter(|c| !is_combining_mark(*c))
        .flat_map(char::to_lowercase)
        .collect()
}

pub fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || is_combining_mark(c)
}

/// Maximal runs of word characters, as character spans.
pub fn word_spans(text: &str) -> Vec<CharSpan> {
    let mut out = Vec::new();
    let mut start = None;
    let mut idx = 0;
    for c in text.chars() {
        match (is_word_char(c), start) {
            (true, None) => start = Some(idx),
            (false, Some(s)) => {
                out.push(CharSpan::new(s, idx));
                start = None;
            }
            _ => {}
        }
        idx += 1;
    }
    if let Some(s) = start {
        out.push(CharSpan::new(s, idx));
    }
    out
}
