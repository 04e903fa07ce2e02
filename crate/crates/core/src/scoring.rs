//! Per-language channel scores, their weighted multilingual average, and
//! subtask predictions.
//!
//! For every language of an instance and each of its two contexts, the
//! static channel is the cosine of the aligned surfaces' word vectors and
//! the contextual channel is the cosine of their contextual vectors in the
//! translated sentence. A language contributes `alpha * bert + beta * we`
//! when both channels exist, and the lone channel's raw value when only one
//! does (provided that channel's weight is positive). The context score is
//! the plain mean over contributing languages.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::io::{self, Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, ExperimentConfig};
use crate::dataset::Instance;
use crate::embedstore::{we_similarity, VectorStore};
use crate::encoder::{bert_similarity, encode, EncodeError, EncoderBackend};
use crate::metrics::{Predictions, Subtask};
use crate::translation::{identity_view, AlignMethod, AlignedContext, EngineId, TranslatedView};
use crate::vector::compensated_sum;

/// Static vector stores by language code.
pub type VectorStores = BTreeMap<String, VectorStore>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelScores {
    pub instance_id: String,
    pub lang: String,
    pub context_index: u8,
    pub sim_we: Option<f64>,
    pub sim_bert: Option<f64>,
    pub alignment: (AlignMethod, AlignMethod),
    /// Why a channel is missing, one entry per missing channel.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub absent: Vec<String>,
}

impl ChannelScores {
    /// This language's blended value, or the reason it is excluded.
    pub fn language_value(&self, alpha: f64, beta: f64) -> Result<f64, String> {
        match (self.sim_bert, self.sim_we) {
            (Some(b), Some(w)) => Ok(alpha * b + beta * w),
            (Some(b), None) if alpha > 0.0 => Ok(b),
            (None, Some(w)) if beta > 0.0 => Ok(w),
            (Some(_), None) => Err(format!("{}: static channel absent and alpha = 0", self.lang)),
            (None, Some(_)) => Err(format!("{}: contextual channel absent and beta = 0", self.lang)),
            (None, None) => Err(format!("{}: no channel ({})", self.lang, self.absent.join("; "))),
        }
    }
}

/// A context score with the per-language values that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Combined {
    pub value: f64,
    /// Sorted by language.
    pub contributions: Vec<(String, f64)>,
}

impl Combined {
    pub fn languages(&self) -> Vec<&str> {
        self.contributions.iter().map(|(l, _)| l.as_str()).collect()
    }
}

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("no channel list to combine")]
    Empty,
    #[error("instance {instance_id} context {context_index}: no language has a usable signal [{}]", reasons.join(" | "))]
    NoSignal {
        instance_id: String,
        context_index: u8,
        reasons: Vec<String>,
    },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("encoder service failed: {0}")]
    Service(EncodeError),
}

/// Weighted mean over languages. Values are summed in language order, so
/// the result does not depend on the order of `channels`.
pub fn combine(channels: &[ChannelScores], alpha: f64, beta: f64) -> Result<Combined, ScoreError> {
    let first = channels.first().ok_or(ScoreError::Empty)?;
    let mut contributions = Vec::with_capacity(channels.len());
    let mut reasons = Vec::new();
    for ch in channels {
        match ch.language_value(alpha, beta) {
            Ok(v) => contributions.push((ch.lang.clone(), v)),
            Err(r) => reasons.push(r),
        }
    }
    if contributions.is_empty() {
        return Err(ScoreError::NoSignal {
            instance_id: first.instance_id.clone(),
            context_index: first.context_index,
            reasons,
        });
    }
    contributions.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let value = compensated_sum(contributions.iter().map(|(_, v)| *v)) / contributions.len() as f64;
    Ok(Combined { value, contributions })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSheet {
    pub instance_id: String,
    pub sim1: f64,
    pub sim2: f64,
    /// `sim2 - sim1`.
    pub delta: f64,
    pub context1: Combined,
    pub context2: Combined,
    pub config_fingerprint: String,
}

impl ScoreSheet {
    fn new(instance_id: &str, context1: Combined, context2: Combined, fingerprint: String) -> Self {
        ScoreSheet {
            instance_id: instance_id.to_string(),
            sim1: context1.value,
            sim2: context2.value,
            delta: context2.value - context1.value,
            context1,
            context2,
            config_fingerprint: fingerprint,
        }
    }
}

/// Orders ids numerically when both are integers, otherwise as strings.
pub fn compare_ids(a: &str, b: &str) -> Ordering {
    match (a.parse::<u64>(), b.parse::<u64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y).then_with(|| a.cmp(b)),
        (Ok(_), Err(_)) => Ordering::Less,
        (Err(_), Ok(_)) => Ordering::Greater,
        _ => a.cmp(b),
    }
}

fn context_channels(
    instance_id: &str,
    lang: &str,
    index: u8,
    ctx: &AlignedContext,
    stores: &VectorStores,
    backend: &dyn EncoderBackend,
) -> Result<ChannelScores, ScoreError> {
    let mut out = ChannelScores {
        instance_id: instance_id.to_string(),
        lang: lang.to_string(),
        context_index: index,
        sim_we: None,
        sim_bert: None,
        alignment: (ctx.method1, ctx.method2),
        absent: Vec::new(),
    };
    let (Some(s1), Some(s2), Some(w1), Some(w2)) = (ctx.span1, ctx.span2, &ctx.surface1, &ctx.surface2) else {
        let failed: Vec<&str> = [(ctx.span1, "word1"), (ctx.span2, "word2")]
            .iter()
            .filter(|(s, _)| s.is_none())
            .map(|(_, w)| *w)
            .collect();
        out.absent.push(format!("{} not aligned", failed.join(", ")));
        return Ok(out);
    };

    match stores.get(lang) {
        Some(store) => {
            out.sim_we = we_similarity(store, w1, w2);
            if out.sim_we.is_none() {
                out.absent.push(format!("no static vector for {w1:?} or {w2:?}"));
            }
        }
        None => out.absent.push("no vector store".into()),
    }

    match encode(backend, lang, &ctx.text) {
        Ok(enc) => {
            out.sim_bert = bert_similarity(&enc, s1, s2);
            if out.sim_bert.is_none() {
                out.absent.push("no contextual token covers a target word".into());
            }
        }
        Err(e) if e.is_service_failure() => return Err(ScoreError::Service(e)),
        Err(e) => out.absent.push(e.to_string()),
    }
    Ok(out)
}

/// Channel scores of one instance for `languages` (source included or
/// not; it is always added). Views for the source language are ignored in
/// favour of the identity view.
pub fn instance_channels(
    instance: &Instance,
    views: &[&TranslatedView],
    extras: &[String],
    stores: &VectorStores,
    backend: &dyn EncoderBackend,
) -> Result<Vec<ChannelScores>, ScoreError> {
    let source = identity_view(instance, &EngineId::fixture());
    let mut out = Vec::new();
    for lang in crate::config::effective_languages(&instance.source_lang, extras) {
        let view = if lang == instance.source_lang {
            Some(&source)
        } else {
            views.iter().copied().find(|v| v.tgt_lang == lang && v.instance_id == instance.id)
        };
        for index in [1u8, 2] {
            match view {
                Some(v) => out.push(context_channels(&instance.id, &lang, index, v.context(index), stores, backend)?),
                None => out.push(ChannelScores {
                    instance_id: instance.id.clone(),
                    lang: lang.clone(),
                    context_index: index,
                    sim_we: None,
                    sim_bert: None,
                    alignment: (AlignMethod::Failed, AlignMethod::Failed),
                    absent: vec!["no translation".into()],
                }),
            }
        }
    }
    Ok(out)
}

/// Every channel score of a dataset. Weights and language subsets can be
/// applied afterwards without touching the encoder again.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ChannelTable {
    rows: HashMap<(String, u8), Vec<ChannelScores>>,
}

impl ChannelTable {
    /// Computes channels for each instance in its source language and in
    /// every language of `extras`, in parallel on the current rayon pool.
    pub fn build(
        instances: &[Instance],
        views: &[TranslatedView],
        extras: &[String],
        stores: &VectorStores,
        backend: &dyn EncoderBackend,
    ) -> Result<Self, ScoreError> {
        let mut by_instance: HashMap<&str, Vec<&TranslatedView>> = HashMap::new();
        for v in views {
            by_instance.entry(v.instance_id.as_str()).or_default().push(v);
        }
        let per_instance: Vec<Vec<ChannelScores>> = instances
            .par_iter()
            .map(|inst| {
                let vs = by_instance.get(inst.id.as_str()).map(Vec::as_slice).unwrap_or_default();
                instance_channels(inst, vs, extras, stores, backend)
            })
            .collect::<Result<_, _>>()?;
        Ok(Self::from_rows(per_instance.into_iter().flatten()))
    }

    pub fn from_rows(rows: impl IntoIterator<Item = ChannelScores>) -> Self {
        let mut table = ChannelTable::default();
        for r in rows {
            table.rows.entry((r.instance_id.clone(), r.context_index)).or_default().push(r);
        }
        table
    }

    /// Channels of one context restricted to `languages`.
    pub fn select(&self, instance_id: &str, context_index: u8, languages: &[String]) -> Vec<ChannelScores> {
        let Some(rows) = self.rows.get(&(instance_id.to_string(), context_index)) else {
            return Vec::new();
        };
        rows.iter().filter(|r| languages.contains(&r.lang)).cloned().collect()
    }

    /// All rows ordered by (instance id, context, language).
    pub fn rows(&self) -> Vec<&ChannelScores> {
        let mut all: Vec<&ChannelScores> = self.rows.values().flatten().collect();
        all.sort_by(|a, b| {
            compare_ids(&a.instance_id, &b.instance_id)
                .then(a.context_index.cmp(&b.context_index))
                .then(a.lang.cmp(&b.lang))
        });
        all
    }

    pub fn languages(&self) -> Vec<String> {
        let mut langs: Vec<String> = self.rows.values().flatten().map(|r| r.lang.clone()).collect();
        langs.sort();
        langs.dedup();
        langs
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceFailure {
    pub instance_id: String,
    pub context_index: u8,
    pub reasons: Vec<String>,
}

/// Sheets of the instances that could be scored and the reasons for the
/// others, both ordered by instance id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreRun {
    pub sheets: Vec<ScoreSheet>,
    pub failures: Vec<InstanceFailure>,
}

fn missing_languages(found: &[ChannelScores], wanted: &[String]) -> Vec<String> {
    wanted
        .iter()
        .filter(|l| !found.iter().any(|c| &c.lang == *l))
        .map(|l| format!("{l}: not in channel table"))
        .collect()
}

fn sheet_from_table(
    instance: &Instance,
    table: &ChannelTable,
    config: &ExperimentConfig,
    fingerprint: &str,
) -> Result<ScoreSheet, InstanceFailure> {
    let langs = config.effective_languages(&instance.source_lang);
    let mut combined = Vec::with_capacity(2);
    for index in [1u8, 2] {
        let channels = table.select(&instance.id, index, &langs);
        let missing = missing_languages(&channels, &langs);
        let result = if channels.is_empty() {
            Err(missing.clone())
        } else {
            combine(&channels, config.alpha, config.beta).map_err(|e| match e {
                ScoreError::NoSignal { reasons, .. } => reasons,
                other => vec![other.to_string()],
            })
        };
        match result {
            Ok(c) => combined.push(c),
            Err(mut reasons) => {
                for m in missing {
                    if !reasons.contains(&m) {
                        reasons.push(m);
                    }
                }
                return Err(InstanceFailure {
                    instance_id: instance.id.clone(),
                    context_index: index,
                    reasons,
                });
            }
        }
    }
    let c2 = combined.pop().expect("two contexts");
    let c1 = combined.pop().expect("two contexts");
    Ok(ScoreSheet::new(&instance.id, c1, c2, fingerprint.to_string()))
}

/// Applies `config`'s weights and languages to precomputed channels.
pub fn score_with_table(
    instances: &[Instance],
    table: &ChannelTable,
    config: &ExperimentConfig,
) -> Result<ScoreRun, ScoreError> {
    config.validate()?;
    let fingerprint = config.fingerprint();
    let mut run = ScoreRun::default();
    for inst in instances {
        match sheet_from_table(inst, table, config, &fingerprint) {
            Ok(s) => run.sheets.push(s),
            Err(f) => run.failures.push(f),
        }
    }
    run.sheets.sort_by(|a, b| compare_ids(&a.instance_id, &b.instance_id));
    run.failures.sort_by(|a, b| compare_ids(&a.instance_id, &b.instance_id));
    Ok(run)
}

/// Scores one instance. `views` must cover `config.languages`.
pub fn score_instance(
    instance: &Instance,
    views: &[&TranslatedView],
    stores: &VectorStores,
    backend: &dyn EncoderBackend,
    config: &ExperimentConfig,
) -> Result<ScoreSheet, ScoreError> {
    config.validate()?;
    let channels = instance_channels(instance, views, &config.languages, stores, backend)?;
    let table = ChannelTable::from_rows(channels);
    sheet_from_table(instance, &table, config, &config.fingerprint()).map_err(|f| ScoreError::NoSignal {
        instance_id: f.instance_id,
        context_index: f.context_index,
        reasons: f.reasons,
    })
}

/// Scores a dataset; returns the run and the channel table behind it.
pub fn score_dataset(
    instances: &[Instance],
    views: &[TranslatedView],
    stores: &VectorStores,
    backend: &dyn EncoderBackend,
    config: &ExperimentConfig,
) -> Result<(ScoreRun, ChannelTable), ScoreError> {
    config.validate()?;
    let table = ChannelTable::build(instances, views, &config.languages, stores, backend)?;
    let run = score_with_table(instances, &table, config)?;
    Ok((run, table))
}

pub fn predict_subtask1(sheets: &[ScoreSheet]) -> BTreeMap<String, f64> {
    sheets.iter().map(|s| (s.instance_id.clone(), s.delta)).collect()
}

pub fn predict_subtask2(sheets: &[ScoreSheet]) -> BTreeMap<String, (f64, f64)> {
    sheets.iter().map(|s| (s.instance_id.clone(), (s.sim1, s.sim2))).collect()
}

pub fn predictions(sheets: &[ScoreSheet], subtask: Subtask) -> Predictions {
    match subtask {
        Subtask::Change => Predictions::Change(predict_subtask1(sheets)),
        Subtask::Similarity => Predictions::Similarity(predict_subtask2(sheets)),
    }
}

#[derive(Debug, Error)]
pub enum PredictionFileError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("prediction file: {0}")]
    Csv(#[from] csv::Error),
    #[error("prediction file lacks column {0:?}")]
    MissingColumn(&'static str),
    #[error("prediction file line {line}: {msg}")]
    Value { line: u64, msg: String },
    #[error("prediction file repeats id {0:?}")]
    DuplicateId(String),
}

fn columns(subtask: Subtask) -> &'static [&'static str] {
    match subtask {
        Subtask::Change => &["id", "change"],
        Subtask::Similarity => &["id", "sim_context1", "sim_context2"],
    }
}

/// Tab-separated predictions with a header row, one line per sheet in the
/// given order. Values use the shortest exact decimal form.
pub fn write_predictions(sheets: &[ScoreSheet], subtask: Subtask, out: impl Write) -> Result<(), PredictionFileError> {
    let mut w = csv::WriterBuilder::new().delimiter(b'\t').from_writer(out);
    w.write_record(columns(subtask))?;
    for s in sheets {
        match subtask {
            Subtask::Change => w.write_record([s.instance_id.clone(), s.delta.to_string()])?,
            Subtask::Similarity => w.write_record([s.instance_id.clone(), s.sim1.to_string(), s.sim2.to_string()])?,
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_predictions(input: impl Read, subtask: Subtask) -> Result<Predictions, PredictionFileError> {
    let mut r = csv::ReaderBuilder::new().delimiter(b'\t').from_reader(input);
    let header = r.headers()?.clone();
    let mut idx = Vec::new();
    for col in columns(subtask) {
        idx.push(header.iter().position(|h| h == *col).ok_or(PredictionFileError::MissingColumn(col))?);
    }
    let mut change = BTreeMap::new();
    let mut sim = BTreeMap::new();
    for rec in r.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let field = |k: usize| rec.get(idx[k]).unwrap_or_default();
        let num = |k: usize| -> Result<f64, PredictionFileError> {
            let raw = field(k);
            raw.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| PredictionFileError::Value {
                    line,
                    msg: format!("{raw:?} is not a finite number"),
                })
        };
        let id = field(0).to_string();
        let fresh = match subtask {
            Subtask::Change => change.insert(id.clone(), num(1)?).is_none(),
            Subtask::Similarity => sim.insert(id.clone(), (num(1)?, num(2)?)).is_none(),
        };
        if !fresh {
            return Err(PredictionFileError::DuplicateId(id));
        }
    }
    Ok(match subtask {
        Subtask::Change => Predictions::Change(change),
        Subtask::Similarity => Predictions::Similarity(sim),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::MarkedContext;
    use crate::embedstore::Casing;
    use crate::encoder::{BackendConfig, SyntheticHashEncoder};
    use crate::text::CharSpan;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn ch(lang: &str, bert: Option<f64>, we: Option<f64>) -> ChannelScores {
        ChannelScores {
            instance_id: "x".into(),
            lang: lang.into(),
            context_index: 1,
            sim_we: we,
            sim_bert: bert,
            alignment: (AlignMethod::Exact, AlignMethod::Exact),
            absent: Vec::new(),
        }
    }

    #[test]
    fn combine_examples() {
        let one = combine(&[ch("en", Some(0.8), Some(0.6))], 0.7, 0.3).unwrap();
        assert_abs_diff_eq!(one.value, 0.74, epsilon = 1e-12);
        let bert_only = combine(&[ch("en", Some(0.8), Some(0.6))], 1.0, 0.0).unwrap();
        assert_eq!(bert_only.value, 0.8);
        // two languages, per-language values 0.5 and 0.9
        let two = combine(&[ch("en", Some(0.5), Some(0.5)), ch("it", Some(0.9), Some(0.9))], 0.5, 0.5).unwrap();
        assert_abs_diff_eq!(two.value, 0.7, epsilon = 1e-12);
        assert_eq!(two.languages(), ["en", "it"]);
        // missing static channel: contextual value alone
        let oov = combine(&[ch("pt", Some(0.4), None)], 0.6, 0.4).unwrap();
        assert_eq!(oov.value, 0.4);
    }

    #[test]
    fn zero_weight_lone_channel_excluded() {
        let c = combine(&[ch("en", None, Some(0.9)), ch("it", Some(0.2), Some(0.5))], 1.0, 0.0).unwrap();
        assert_eq!(c.languages(), ["it"]);
        assert_eq!(c.value, 0.2);
        match combine(&[ch("en", None, Some(0.9))], 1.0, 0.0) {
            Err(ScoreError::NoSignal { reasons, .. }) => assert!(reasons[0].contains("beta = 0")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn no_signal_lists_reasons() {
        let mut a = ch("en", None, None);
        a.absent.push("word2 not aligned".into());
        match combine(&[a, ch("it", None, None)], 0.5, 0.5) {
            Err(ScoreError::NoSignal { reasons, .. }) => {
                assert_eq!(reasons.len(), 2);
                assert!(reasons[0].contains("word2 not aligned"));
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(combine(&[], 0.5, 0.5), Err(ScoreError::Empty)));
    }

    #[test]
    fn id_ordering() {
        let mut ids = vec!["10", "2", "b", "a", "1"];
        ids.sort_by(|a, b| compare_ids(a, b));
        assert_eq!(ids, ["1", "2", "10", "a", "b"]);
    }

    fn instance(id: &str, ctx1: &str, ctx2: &str) -> Instance {
        let ctx = |t: &str| {
            let spans = crate::text::word_spans(t);
            MarkedContext::new(t, spans[0], spans[spans.len() - 1]).unwrap()
        };
        Instance {
            id: id.into(),
            source_lang: "en".into(),
            word1: "w1".into(),
            word2: "w2".into(),
            context1: ctx(ctx1),
            context2: ctx(ctx2),
            gold: None,
        }
    }

    fn config(alpha: f64, beta: f64) -> ExperimentConfig {
        ExperimentConfig {
            alpha,
            beta,
            languages: vec![],
            engine: EngineId::fixture(),
            backend: BackendConfig::SyntheticHash { dim: 16, seed: 5 },
        }
    }

    fn stores() -> VectorStores {
        let mut s = VectorStore::new("en", 2, Casing::Lower);
        s.insert("cell", &[1.0, 0.0]).unwrap();
        s.insert("room", &[1.0, 1.0]).unwrap();
        s.insert("cells", &[0.0, 1.0]).unwrap();
        BTreeMap::from([("en".to_string(), s)])
    }

    #[test]
    fn source_only_degenerates_to_single_channel() {
        let backend = SyntheticHashEncoder::new(16, 5);
        let inst = instance("0", "cell in a room", "room of cells");
        let sheet = score_instance(&inst, &[], &stores(), &backend, &config(1.0, 0.0)).unwrap();
        let enc = encode(&backend, "en", &inst.context1.text).unwrap();
        let direct = bert_similarity(&enc, inst.context1.span1, inst.context1.span2).unwrap();
        assert_eq!(sheet.sim1, direct);
        let we = score_instance(&inst, &[], &stores(), &backend, &config(0.0, 1.0)).unwrap();
        assert_abs_diff_eq!(we.sim1, std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-7);
        assert_abs_diff_eq!(we.sim2, std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-7);
        assert_eq!(sheet.delta, sheet.sim2 - sheet.sim1);
    }

    #[test]
    fn swapping_contexts_negates_delta() {
        let backend = SyntheticHashEncoder::new(16, 5);
        let inst = instance("0", "cell in a room", "room of cells");
        let a = score_instance(&inst, &[], &stores(), &backend, &config(0.7, 0.3)).unwrap();
        let b = score_instance(&inst.with_contexts_swapped(), &[], &stores(), &backend, &config(0.7, 0.3)).unwrap();
        assert_eq!(a.delta, -b.delta);
        let same = instance("1", "cell in a room", "cell in a room");
        assert_eq!(score_instance(&same, &[], &stores(), &backend, &config(0.7, 0.3)).unwrap().delta, 0.0);
    }

    #[test]
    fn missing_translation_is_reported() {
        let backend = SyntheticHashEncoder::new(4, 1);
        let inst = instance("3", "cell x room", "room y cell");
        let cfg = config(0.5, 0.5).with_languages(vec!["it".into()]);
        let channels = instance_channels(&inst, &[], &cfg.languages, &stores(), &backend).unwrap();
        assert_eq!(channels.len(), 4);
        assert!(channels.iter().any(|c| c.lang == "it" && c.absent == ["no translation"]));
        // the source language still carries the score
        let sheet = score_instance(&inst, &[], &stores(), &backend, &cfg).unwrap();
        assert_eq!(sheet.context1.languages(), ["en"]);
    }

    #[test]
    fn dataset_run_is_ordered_and_reports_failures() {
        let backend = SyntheticHashEncoder::new(8, 2);
        let mut bad = instance("2", "cell in a room", "room of cells");
        bad.context2 = MarkedContext::new("zzz qqq", CharSpan::new(0, 3), CharSpan::new(4, 7)).unwrap();
        let insts = vec![instance("10", "room cell", "cell room"), bad, instance("1", "cell b room", "room c cell")];
        // alpha = 0 and no static vectors for zzz/qqq: context 2 of "2" has no signal
        let (run, table) = score_dataset(&insts, &[], &stores(), &backend, &config(0.0, 1.0)).unwrap();
        let ids: Vec<&str> = run.sheets.iter().map(|s| s.instance_id.as_str()).collect();
        assert_eq!(ids, ["1", "10"]);
        assert_eq!(run.failures.len(), 1);
        assert_eq!(run.failures[0].context_index, 2);
        assert_eq!(table.rows().len(), 6);
        assert_eq!(table.languages(), ["en"]);
    }

    #[test]
    fn prediction_files_round_trip() {
        let c = |v: f64| Combined {
            value: v,
            contributions: vec![("en".into(), v)],
        };
        let sheets = vec![
            ScoreSheet::new("a", c(0.74), c(0.30), "f".into()),
            ScoreSheet::new("b", c(0.1), c(1.0 / 3.0), "f".into()),
        ];
        assert_abs_diff_eq!(sheets[0].delta, -0.44, epsilon = 1e-15);
        for subtask in [Subtask::Change, Subtask::Similarity] {
            let mut buf = Vec::new();
            write_predictions(&sheets, subtask, &mut buf).unwrap();
            let back = read_predictions(buf.as_slice(), subtask).unwrap();
            assert_eq!(back, predictions(&sheets, subtask));
        }
        let mut buf = Vec::new();
        write_predictions(&sheets, Subtask::Change, &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("id\tchange\na\t"));
        assert!(matches!(
            read_predictions("id\tchange\na\tx\n".as_bytes(), Subtask::Change),
            Err(PredictionFileError::Value { .. })
        ));
        assert!(matches!(
            read_predictions("id\tdelta\n".as_bytes(), Subtask::Change),
            Err(PredictionFileError::MissingColumn("change"))
        ));
        assert!(matches!(
            read_predictions("id\tchange\na\t1\na\t2\n".as_bytes(), Subtask::Change),
            Err(PredictionFileError::DuplicateId(_))
        ));
    }

    const LANGS: [&str; 11] = ["en", "es", "it", "bs", "de", "el", "pl", "pt", "ru", "sr", "tr"];

    fn full_channels() -> impl Strategy<Value = Vec<ChannelScores>> {
        prop::collection::vec((-1.0f64..=1.0, -1.0f64..=1.0), 1..=11).prop_map(|vals| {
            vals.iter()
                .enumerate()
                .map(|(i, (b, w))| ch(LANGS[i], Some(*b), Some(*w)))
                .collect()
        })
    }

    proptest! {
        #[test]
        fn equals_direct_formula(chs in full_channels(), alpha in 0.0f64..=1.0, beta in 0.0f64..=1.0) {
            prop_assume!(alpha + beta > 0.0);
            let direct: f64 = chs.iter().map(|c| alpha * c.sim_bert.unwrap() + beta * c.sim_we.unwrap()).sum::<f64>()
                / chs.len() as f64;
            let got = combine(&chs, alpha, beta).unwrap().value;
            prop_assert!((got - direct).abs() <= 1e-12);
        }

        #[test]
        fn permutation_invariant(chs in full_channels(), alpha in 0.0f64..=1.0, seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut shuffled = chs.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let a = combine(&chs, alpha, 1.0 - alpha + 1e-3).unwrap();
            let b = combine(&shuffled, alpha, 1.0 - alpha + 1e-3).unwrap();
            prop_assert_eq!(a.value.to_bits(), b.value.to_bits());
        }

        #[test]
        fn monotone_in_alpha(vals in prop::collection::vec((-1.0f64..=1.0, -1.0f64..=1.0), 1..=11),
                             a1 in 0.0f64..=1.0, da in 0.0f64..=1.0, beta in 0.01f64..=1.0) {
            // beta fixed: needs non-negative contextual values at or above the static ones
            let chs: Vec<ChannelScores> = vals.iter().enumerate()
                .map(|(i, (x, y))| ch(LANGS[i], Some(x.abs().max(*y)), Some(x.abs().min(*y))))
                .collect();
            let lo = combine(&chs, a1, beta).unwrap().value;
            let hi = combine(&chs, a1 + da, beta).unwrap().value;
            prop_assert!(hi >= lo - 1e-12);
        }

        #[test]
        fn monotone_along_unit_weights(vals in prop::collection::vec((-1.0f64..=1.0, -1.0f64..=1.0), 1..=11),
                                       a1 in 0.0f64..=1.0, a2 in 0.0f64..=1.0) {
            let chs: Vec<ChannelScores> = vals.iter().enumerate()
                .map(|(i, (x, y))| ch(LANGS[i], Some(x.max(*y)), Some(x.min(*y))))
                .collect();
            let (lo, hi) = (a1.min(a2), a1.max(a2));
            let s_lo = combine(&chs, lo, 1.0 - lo).unwrap().value;
            let s_hi = combine(&chs, hi, 1.0 - hi).unwrap().value;
            prop_assert!(s_hi >= s_lo - 1e-12);
        }
    }
}
