//! Task instances: a word pair, two contexts with the marked occurrences of
//! both words, and optional human similarity means.
//!
//! Two on-disk dialects are read:
//!
//! * the canonical newline-delimited record format written by
//!   [`write_canonical`], and
//! * the shared-task TSV, where each context marks the two target words
//!   inline (`<strong>cell</strong>` by default).

use std::collections::HashSet;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::{char_len, fold, slice_chars, CharSpan};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkedContext {
    pub text: String,
    pub span1: CharSpan,
    pub span2: CharSpan,
    pub surface1: String,
    pub surface2: String,
}

impl MarkedContext {
    /// Builds a context, deriving both surfaces from the spans.
    pub fn new(text: impl Into<String>, span1: CharSpan, span2: CharSpan) -> Result<Self, String> {
        let text = text.into();
        let len = char_len(&text);
        for (i, span) in [(1, span1), (2, span2)] {
            if !span.fits(len) {
                return Err(format!("span{i} {span} outside text of {len} characters"));
            }
        }
        if span1.overlaps(&span2) {
            return Err(format!("spans {span1} and {span2} overlap"));
        }
        let surface1 = slice_chars(&text, span1).unwrap_or_default().to_string();
        let surface2 = slice_chars(&text, span2).unwrap_or_default().to_string();
        Ok(MarkedContext {
            text,
            span1,
            span2,
            surface1,
            surface2,
        })
    }

    pub fn validate(&self) -> Result<(), String> {
        let rebuilt = MarkedContext::new(self.text.clone(), self.span1, self.span2)?;
        if rebuilt.surface1 != self.surface1 || rebuilt.surface2 != self.surface2 {
            return Err("recorded surface differs from the marked substring".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoldScores {
    pub sim1_mean: f64,
    pub sim2_mean: f64,
}

impl GoldScores {
    /// Change from context 1 to context 2.
    pub fn delta(&self) -> f64 {
        self.sim2_mean - self.sim1_mean
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub id: String,
    pub source_lang: String,
    pub word1: String,
    pub word2: String,
    pub context1: MarkedContext,
    pub context2: MarkedContext,
    pub gold: Option<GoldScores>,
}

impl Instance {
    pub fn context(&self, index: u8) -> &MarkedContext {
        if index == 1 {
            &self.context1
        } else {
            &self.context2
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.id.is_empty() {
            return Err("empty id".into());
        }
        self.context1
            .validate()
            .map_err(|e| format!("context1: {e}"))?;
        self.context2
            .validate()
            .map_err(|e| format!("context2: {e}"))?;
        if let Some(g) = &self.gold {
            if !g.sim1_mean.is_finite() || !g.sim2_mean.is_finite() {
                return Err("gold scores must be finite".into());
            }
        }
        Ok(())
    }

    /// The same instance with its two contexts (and gold means) exchanged.
    pub fn with_contexts_swapped(&self) -> Instance {
        Instance {
            context1: self.context2.clone(),
            context2: self.context1.clone(),
            gold: self.gold.map(|g| GoldScores {
                sim1_mean: g.sim2_mean,
                sim2_mean: g.sim1_mean,
            }),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RowError {
    #[error("expected {expected} columns, found {found}")]
    ColumnCount { expected: usize, found: usize },
    #[error("unmatched marker in {column}")]
    UnmatchedMarker { column: String },
    #[error("nested marker in {column}")]
    NestedMarker { column: String },
    #[error("span extraction failed in {column}: {reason}")]
    SpanExtraction { column: String, reason: String },
    #[error("invalid record: {0}")]
    Invalid(String),
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("row {row}: {error}")]
    Row { row: usize, error: RowError },
    #[error("row {row}: duplicate instance id {id:?}")]
    DuplicateId { row: usize, id: String },
    #[error("missing required column {0:?}")]
    MissingColumn(String),
}

impl DatasetError {
    pub fn row(&self) -> Option<usize> {
        match self {
            DatasetError::Row { row, .. } | DatasetError::DuplicateId { row, .. } => Some(*row),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ParseMode {
    /// Abort on the first bad row.
    #[default]
    Strict,
    /// Skip bad rows, log them, and return them alongside the instances.
    Lenient,
}

/// Inline marker dialect of the shared-task TSV.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TsvDialect {
    pub open: String,
    pub close: String,
    /// Source language assigned to every row.
    pub lang: String,
}

impl Default for TsvDialect {
    fn default() -> Self {
        TsvDialect {
            open: "<strong>".into(),
            close: "</strong>".into(),
            lang: "en".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DatasetFormat {
    Canonical,
    TaskTsv(TsvDialect),
}

#[derive(Debug, Default)]
pub struct ParsedDataset {
    pub instances: Vec<Instance>,
    /// Rows skipped in lenient mode.
    pub skipped: Vec<DatasetError>,
}

pub fn parse_dataset(
    path: impl AsRef<Path>,
    format: &DatasetFormat,
    mode: ParseMode,
) -> Result<ParsedDataset, DatasetError> {
    let path = path.as_ref();
    let content = fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    match format {
        DatasetFormat::Canonical => parse_canonical_str(&content, mode),
        DatasetFormat::TaskTsv(dialect) => parse_task_tsv_str(&content, dialect, mode),
    }
}

/// Accumulates rows, enforcing id uniqueness and the parse mode.
struct Collector {
    mode: ParseMode,
    seen: HashSet<String>,
    out: ParsedDataset,
}

impl Collector {
    fn new(mode: ParseMode) -> Self {
        Collector {
            mode,
            seen: HashSet::new(),
            out: ParsedDataset::default(),
        }
    }

    fn push(&mut self, row: usize, parsed: Result<Instance, RowError>) -> Result<(), DatasetError> {
        let err = match parsed {
            Ok(inst) if self.seen.contains(&inst.id) => DatasetError::DuplicateId { row, id: inst.id },
            Ok(inst) => {
                self.seen.insert(inst.id.clone());
                self.out.instances.push(inst);
                return Ok(());
            }
            Err(error) => DatasetError::Row { row, error },
        };
        match self.mode {
            ParseMode::Strict => Err(err),
            ParseMode::Lenient => {
                log::warn!("skipping {err}");
                self.out.skipped.push(err);
                Ok(())
            }
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CanonicalRecord {
    id: String,
    lang: String,
    word1: String,
    word2: String,
    ctx1_text: String,
    ctx1_span1: CharSpan,
    ctx1_span2: CharSpan,
    ctx2_text: String,
    ctx2_span1: CharSpan,
    ctx2_span2: CharSpan,
    gold_sim1: Option<f64>,
    gold_sim2: Option<f64>,
}

impl CanonicalRecord {
    fn from_instance(inst: &Instance) -> Self {
        CanonicalRecord {
            id: inst.id.clone(),
            lang: inst.source_lang.clone(),
            word1: inst.word1.clone(),
            word2: inst.word2.clone(),
            ctx1_text: inst.context1.text.clone(),
            ctx1_span1: inst.context1.span1,
            ctx1_span2: inst.context1.span2,
            ctx2_text: inst.context2.text.clone(),
            ctx2_span1: inst.context2.span1,
            ctx2_span2: inst.context2.span2,
            gold_sim1: inst.gold.map(|g| g.sim1_mean),
            gold_sim2: inst.gold.map(|g| g.sim2_mean),
        }
    }

    fn into_instance(self) -> Result<Instance, RowError> {
        let context1 = MarkedContext::new(self.ctx1_text, self.ctx1_span1, self.ctx1_span2)
            .map_err(|reason| RowError::SpanExtraction {
                column: "ctx1".into(),
                reason,
            })?;
        let context2 = MarkedContext::new(self.ctx2_text, self.ctx2_span1, self.ctx2_span2)
            .map_err(|reason| RowError::SpanExtraction {
                column: "ctx2".into(),
                reason,
            })?;
        let gold = match (self.gold_sim1, self.gold_sim2) {
            (Some(a), Some(b)) => Some(GoldScores {
                sim1_mean: a,
                sim2_mean: b,
            }),
            (None, None) => None,
            _ => return Err(RowError::Invalid("gold_sim1 and gold_sim2 must both be set or both null".into())),
        };
        let inst = Instance {
            id: self.id,
            source_lang: self.lang,
            word1: self.word1,
            word2: self.word2,
            context1,
            context2,
            gold,
        };
        inst.validate().map_err(RowError::Invalid)?;
        Ok(inst)
    }
}

pub fn parse_canonical_str(content: &str, mode: ParseMode) -> Result<ParsedDataset, DatasetError> {
    let mut collector = Collector::new(mode);
    for (idx, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str::<CanonicalRecord>(line)
            .map_err(|e| RowError::Invalid(e.to_string()))
            .and_then(CanonicalRecord::into_instance);
        collector.push(idx + 1, parsed)?;
    }
    Ok(collector.out)
}

/// Serializes instances to the canonical record format.
pub fn canonical_string(instances: &[Instance]) -> String {
    let mut out = String::new();
    for inst in instances {
        let record = CanonicalRecord::from_instance(inst);
        out.push_str(&serde_json::to_string(&record).expect("record serializes"));
        out.push('\n');
    }
    out
}

pub fn write_canonical(instances: &[Instance], path: impl AsRef<Path>) -> Result<(), DatasetError> {
    let path = path.as_ref();
    let io_err = |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = fs::File::create(path).map_err(io_err)?;
    let mut w = BufWriter::new(file);
    w.write_all(canonical_string(instances).as_bytes()).map_err(io_err)?;
    w.flush().map_err(io_err)
}

/// Strips inline markers, returning the clean text and the marked spans in
/// order of appearance.
pub fn extract_marked(
    marked: &str,
    open: &str,
    close: &str,
    column: &str,
) -> Result<(String, Vec<CharSpan>), RowError> {
    let mut text = String::with_capacity(marked.len());
    let mut spans = Vec::new();
    let mut open_at: Option<usize> = None;
    let mut pos = 0usize;
    let mut rest = marked;
    while !rest.is_empty() {
        if rest.starts_with(open) {
            if open_at.is_some() {
                return Err(RowError::NestedMarker { column: column.into() });
            }
            open_at = Some(pos);
            rest = &rest[open.len()..];
        } else if rest.starts_with(close) {
            let start = open_at
                .take()
                .ok_or_else(|| RowError::UnmatchedMarker { column: column.into() })?;
            if start == pos {
                return Err(RowError::SpanExtraction {
                    column: column.into(),
                    reason: "empty marked span".into(),
                });
            }
            spans.push(CharSpan::new(start, pos));
            rest = &rest[close.len()..];
        } else {
            let c = rest.chars().next().expect("non-empty");
            text.push(c);
            pos += 1;
            rest = &rest[c.len_utf8()..];
        }
    }
    if open_at.is_some() {
        return Err(RowError::UnmatchedMarker { column: column.into() });
    }
    Ok((text, spans))
}

fn common_prefix(a: &str, b: &str) -> usize {
    fold(a)
        .chars()
        .zip(fold(b).chars())
        .take_while(|(x, y)| x == y)
        .count()
}

/// Decides which of two marked spans belongs to word1. Surface hints win
/// when they identify the spans; otherwise the assignment with the larger
/// total folded prefix overlap with the lemmas is used, text order on ties.
fn assign_spans(
    text: &str,
    spans: [CharSpan; 2],
    words: (&str, &str),
    hints: (Option<&str>, Option<&str>),
) -> (CharSpan, CharSpan) {
    let [a, b] = spans;
    let sa = slice_chars(text, a).unwrap_or_default();
    let sb = slice_chars(text, b).unwrap_or_default();
    let same = |x: &str, y: &str| fold(x) == fold(y);
    if let (Some(h1), Some(h2)) = hints {
        if same(sa, h1) && same(sb, h2) {
            return (a, b);
        }
        if same(sa, h2) && same(sb, h1) {
            return (b, a);
        }
    }
    let straight = common_prefix(sa, words.0) + common_prefix(sb, words.1);
    let crossed = common_prefix(sa, words.1) + common_prefix(sb, words.0);
    if crossed > straight {
        (b, a)
    } else {
        (a, b)
    }
}

struct TsvColumns {
    count: usize,
    id: Option<usize>,
    word1: usize,
    word2: usize,
    context1: usize,
    context2: usize,
    hints: [Option<usize>; 4],
    gold1: Option<usize>,
    gold2: Option<usize>,
}

impl TsvColumns {
    fn from_header(header: &str) -> Result<Self, DatasetError> {
        let names: Vec<String> = header.split('\t').map(|h| h.trim().to_lowercase()).collect();
        let find = |cands: &[&str]| names.iter().position(|n| cands.contains(&n.as_str()));
        let need = |name: &str| find(&[name]).ok_or_else(|| DatasetError::MissingColumn(name.into()));
        Ok(TsvColumns {
            count: names.len(),
            id: find(&["id"]),
            word1: need("word1")?,
            word2: need("word2")?,
            context1: need("context1")?,
            context2: need("context2")?,
            hints: [
                find(&["word1_context1"]),
                find(&["word2_context1"]),
                find(&["word1_context2"]),
                find(&["word2_context2"]),
            ],
            gold1: find(&["sim_context1", "sim1", "gold_sim1"]),
            gold2: find(&["sim_context2", "sim2", "gold_sim2"]),
        })
    }
}

fn parse_tsv_row(
    fields: &[&str],
    cols: &TsvColumns,
    dialect: &TsvDialect,
    index: usize,
) -> Result<Instance, RowError> {
    if fields.len() != cols.count {
        return Err(RowError::ColumnCount {
            expected: cols.count,
            found: fields.len(),
        });
    }
    let get = |i: usize| fields[i].trim();
    let opt = |i: Option<usize>| i.map(get).filter(|s| !s.is_empty());
    let word1 = get(cols.word1).to_string();
    let word2 = get(cols.word2).to_string();

    let mut contexts = Vec::with_capacity(2);
    for (m, col, hints) in [
        (1, cols.context1, (cols.hints[0], cols.hints[1])),
        (2, cols.context2, (cols.hints[2], cols.hints[3])),
    ] {
        let column = format!("context{m}");
        let (text, spans) = extract_marked(get(col), &dialect.open, &dialect.close, &column)?;
        let spans: [CharSpan; 2] = spans.try_into().map_err(|v: Vec<CharSpan>| RowError::SpanExtraction {
            column: column.clone(),
            reason: format!("expected 2 marked words, found {}", v.len()),
        })?;
        let (s1, s2) = assign_spans(&text, spans, (&word1, &word2), (opt(hints.0), opt(hints.1)));
        let ctx = MarkedContext::new(text, s1, s2).map_err(|reason| RowError::SpanExtraction { column, reason })?;
        contexts.push(ctx);
    }
    let context2 = contexts.pop().expect("two contexts");
    let context1 = contexts.pop().expect("two contexts");

    let parse_gold = |i: usize| {
        get(i)
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| RowError::Invalid(format!("gold score {:?} is not a finite number", get(i))))
    };
    let gold = match (opt(cols.gold1), opt(cols.gold2)) {
        (Some(_), Some(_)) => Some(GoldScores {
            sim1_mean: parse_gold(cols.gold1.expect("present"))?,
            sim2_mean: parse_gold(cols.gold2.expect("present"))?,
        }),
        (None, None) => None,
        _ => return Err(RowError::Invalid("only one gold score present".into())),
    };

    Ok(Instance {
        id: opt(cols.id).map(str::to_string).unwrap_or_else(|| index.to_string()),
        source_lang: dialect.lang.clone(),
        word1,
        word2,
        context1,
        context2,
        gold,
    })
}

/// Parses the shared-task TSV. The first non-empty line is the header; it
/// must name `word1`, `word2`, `context1` and `context2`. Rows without an
/// `id` column are numbered from 0 in file order.
pub fn parse_task_tsv_str(
    content: &str,
    dialect: &TsvDialect,
    mode: ParseMode,
) -> Result<ParsedDataset, DatasetError> {
    let mut lines = content
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let Some((_, header)) = lines.next() else {
        return Ok(ParsedDataset::default());
    };
    let cols = TsvColumns::from_header(header)?;
    let mut collector = Collector::new(mode);
    for (data_idx, (line_idx, line)) in lines.enumerate() {
        let fields: Vec<&str> = line.split('\t').collect();
        collector.push(line_idx + 1, parse_tsv_row(&fields, &cols, dialect, data_idx))?;
    }
    Ok(collector.out)
}
