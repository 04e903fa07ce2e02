//! Locating the two target words inside a translated context.
//!
//! Each word goes down a ladder of strategies and keeps the first hit:
//!
//! 1. `exact`: the isolated-word translation, case- and diacritic-folded,
//!    matched token-for-token against the translated text;
//! 2. `fuzzy`: a translated token sharing a long enough folded prefix with
//!    the isolated-word translation, widened to the whole token;
//! 3. `marker`: the source word is wrapped in sentinels, the sentence is
//!    translated again, and whatever survives between the sentinels is
//!    searched for in the translated text.
//!
//! Stages run for both words before the next stage starts, in source-span
//! order, and an occurrence claimed by one word is never given to the other.

use serde::{Deserialize, Serialize};

use crate::dataset::MarkedContext;
use crate::text::{fold, slice_chars, word_spans, CharSpan};

/// Longest translation, in tokens, accepted as one multi-word span.
const MAX_PHRASE_TOKENS: usize = 3;
const FUZZY_MIN_PREFIX: usize = 4;
const FUZZY_MIN_RATIO: f64 = 0.6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlignMethod {
    Exact,
    Fuzzy,
    Marker,
    Failed,
}

impl AlignMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            AlignMethod::Exact => "exact",
            AlignMethod::Fuzzy => "fuzzy",
            AlignMethod::Marker => "marker",
            AlignMethod::Failed => "failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignedContext {
    pub text: String,
    pub span1: Option<CharSpan>,
    pub span2: Option<CharSpan>,
    pub surface1: Option<String>,
    pub surface2: Option<String>,
    pub method1: AlignMethod,
    pub method2: AlignMethod,
}

impl AlignedContext {
    /// The source context itself, both words aligned exactly.
    pub fn identity(ctx: &MarkedContext) -> Self {
        AlignedContext {
            text: ctx.text.clone(),
            span1: Some(ctx.span1),
            span2: Some(ctx.span2),
            surface1: Some(ctx.surface1.clone()),
            surface2: Some(ctx.surface2.clone()),
            method1: AlignMethod::Exact,
            method2: AlignMethod::Exact,
        }
    }

    fn from_parts(text: &str, found: [Option<(CharSpan, AlignMethod)>; 2]) -> Self {
        let part = |f: Option<(CharSpan, AlignMethod)>| match f {
            Some((span, method)) => (
                Some(span),
                slice_chars(text, span).map(str::to_string),
                method,
            ),
            None => (None, None, AlignMethod::Failed),
        };
        let (span1, surface1, method1) = part(found[0]);
        let (span2, surface2, method2) = part(found[1]);
        AlignedContext {
            text: text.to_string(),
            span1,
            span2,
            surface1,
            surface2,
            method1,
            method2,
        }
    }

    pub fn both_aligned(&self) -> bool {
        self.span1.is_some() && self.span2.is_some()
    }

    /// Checks the span/surface/method invariants.
    pub fn validate(&self) -> Result<(), String> {
        for (i, span, surface, method) in [
            (1, self.span1, &self.surface1, self.method1),
            (2, self.span2, &self.surface2, self.method2),
        ] {
            match (span, surface) {
                (Some(span), Some(surface)) => {
                    if method == AlignMethod::Failed {
                        return Err(format!("word {i} has a span but method=failed"));
                    }
                    if slice_chars(&self.text, span) != Some(surface.as_str()) || span.is_empty() {
                        return Err(format!("word {i}: text{span} != {surface:?}"));
                    }
                }
                (None, None) if method == AlignMethod::Failed => {}
                _ => return Err(format!("word {i}: span, surface and method disagree")),
            }
        }
        if let (Some(a), Some(b)) = (self.span1, self.span2) {
            if a.overlaps(&b) {
                return Err(format!("aligned spans {a} and {b} overlap"));
            }
        }
        Ok(())
    }
}

/// Sentinel pair wrapped around a source word for marker re-translation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentinels {
    pub open: String,
    pub close: String,
}

impl Default for Sentinels {
    fn default() -> Self {
        Sentinels {
            open: "⟦".into(),
            close: "⟧".into(),
        }
    }
}

/// Final rung of the ladder.
pub enum MarkerStrategy<'a> {
    Disabled,
    /// `translate` receives the source sentence with one word wrapped in the
    /// sentinels and returns its translation, or `None` when unavailable.
    Retranslate {
        sentinels: Sentinels,
        translate: &'a (dyn Fn(&str) -> Option<String> + Sync),
    },
}

struct Token {
    span: CharSpan,
    folded: String,
}

fn tokenize(text: &str) -> Vec<Token> {
    word_spans(text)
        .into_iter()
        .map(|span| Token {
            span,
            folded: fold(slice_chars(text, span).unwrap_or_default()),
        })
        .collect()
}

fn folded_words(s: &str) -> Vec<String> {
    tokenize(s).into_iter().map(|t| t.folded).collect()
}

fn free(span: &CharSpan, taken: &[CharSpan]) -> bool {
    taken.iter().all(|t| !t.overlaps(span))
}

/// First run of consecutive tokens equal to `phrase` not overlapping `taken`.
fn find_phrase(tokens: &[Token], phrase: &[String], taken: &[CharSpan]) -> Option<CharSpan> {
    if phrase.is_empty() || phrase.len() > tokens.len() {
        return None;
    }
    tokens.windows(phrase.len()).find_map(|w| {
        let matches = w.iter().zip(phrase).all(|(t, p)| &t.folded == p);
        let span = CharSpan::new(w[0].span.start, w[w.len() - 1].span.end);
        (matches && free(&span, taken)).then_some(span)
    })
}

/// Whole phrase when it is short enough, then its first token.
fn find_candidate(tokens: &[Token], candidate: &[String], taken: &[CharSpan]) -> Option<CharSpan> {
    if candidate.len() > 1 && candidate.len() <= MAX_PHRASE_TOKENS {
        if let Some(span) = find_phrase(tokens, candidate, taken) {
            return Some(span);
        }
    }
    find_phrase(tokens, &candidate[..candidate.len().min(1)], taken)
}

fn common_prefix(a: &str, b: &str) -> usize {
    a.chars().zip(b.chars()).take_while(|(x, y)| x == y).count()
}

fn fuzzy_match(tokens: &[Token], candidate: &[String], taken: &[CharSpan]) -> Option<CharSpan> {
    let head = candidate.first()?;
    let head_len = head.chars().count();
    let mut best: Option<(usize, CharSpan)> = None;
    for tok in tokens.iter().filter(|t| free(&t.span, taken)) {
        let lcp = common_prefix(head, &tok.folded);
        let shorter = head_len.min(tok.folded.chars().count());
        let accepted = lcp > 0 && (lcp >= FUZZY_MIN_PREFIX || lcp as f64 >= FUZZY_MIN_RATIO * shorter as f64);
        if accepted && best.is_none_or(|(b, _)| lcp > b) {
            best = Some((lcp, tok.span));
        }
    }
    best.map(|(_, span)| span)
}

/// Source text with the word at `span` wrapped in sentinels.
fn wrap_word(text: &str, span: CharSpan, sentinels: &Sentinels) -> Option<String> {
    let before: String = text.chars().take(span.start).collect();
    let word = slice_chars(text, span)?;
    let after: String = text.chars().skip(span.end).collect();
    Some(format!("{before}{}{word}{}{after}", sentinels.open, sentinels.close))
}

fn between_sentinels<'t>(text: &'t str, sentinels: &Sentinels) -> Option<&'t str> {
    let open = text.find(&sentinels.open)?;
    let rest = &text[open + sentinels.open.len()..];
    let close = rest.find(&sentinels.close)?;
    Some(rest[..close].trim())
}

/// Aligns both words of `src_ctx` inside `translated_text`. Never fails:
/// a word that no strategy places is reported with `method = failed`.
pub fn align_pair(
    src_ctx: &MarkedContext,
    translated_text: &str,
    word_translations: (&str, &str),
    fallback: &MarkerStrategy<'_>,
) -> AlignedContext {
    let tokens = tokenize(translated_text);
    let candidates = [folded_words(word_translations.0), folded_words(word_translations.1)];
    let order: [usize; 2] = if src_ctx.span2.start < src_ctx.span1.start {
        [1, 0]
    } else {
        [0, 1]
    };
    let mut found: [Option<(CharSpan, AlignMethod)>; 2] = [None, None];
    let taken = |found: &[Option<(CharSpan, AlignMethod)>; 2]| -> Vec<CharSpan> {
        found.iter().flatten().map(|(s, _)| *s).collect()
    };

    for &i in &order {
        if let Some(span) = find_candidate(&tokens, &candidates[i], &taken(&found)) {
            found[i] = Some((span, AlignMethod::Exact));
        }
    }
    for &i in &order {
        if found[i].is_none() {
            if let Some(span) = fuzzy_match(&tokens, &candidates[i], &taken(&found)) {
                found[i] = Some((span, AlignMethod::Fuzzy));
            }
        }
    }
    if let MarkerStrategy::Retranslate { sentinels, translate } = fallback {
        for &i in &order {
            if found[i].is_some() {
                continue;
            }
            let src_span = if i == 0 { src_ctx.span1 } else { src_ctx.span2 };
            let lifted = wrap_word(&src_ctx.text, src_span, sentinels)
                .and_then(|marked| translate(&marked))
                .and_then(|out| between_sentinels(&out, sentinels).map(folded_words));
            if let Some(inner) = lifted.filter(|w| !w.is_empty()) {
                if let Some(span) = find_candidate(&tokens, &inner, &taken(&found)) {
                    found[i] = Some((span, AlignMethod::Marker));
                }
            }
        }
    }
    let aligned = AlignedContext::from_parts(translated_text, found);
    debug_assert!(aligned.validate().is_ok());
    aligned
}
