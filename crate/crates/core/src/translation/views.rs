use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::align::{align_pair, AlignedContext, MarkerStrategy, Sentinels};
use super::{translate, translate_word, EngineId, TranslateError, TranslationCache, TranslationEngine};
use crate::dataset::{Instance, MarkedContext};

/// One instance rendered in one language by one engine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranslatedView {
    pub instance_id: String,
    pub tgt_lang: String,
    pub engine: EngineId,
    pub ctx1: AlignedContext,
    pub ctx2: AlignedContext,
}

impl TranslatedView {
    pub fn context(&self, index: u8) -> &AlignedContext {
        if index == 1 {
            &self.ctx1
        } else {
            &self.ctx2
        }
    }
}

#[derive(Debug)]
pub struct ViewError {
    pub instance_id: String,
    pub tgt_lang: String,
    pub error: Box<TranslateError>,
}

impl fmt::Display for ViewError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "instance {} -> {}: {}", self.instance_id, self.tgt_lang, self.error)
    }
}

#[derive(Debug, Default)]
pub struct ViewsOutcome {
    pub views: Vec<TranslatedView>,
    pub ledger: Vec<ViewError>,
}

/// View of an instance in its own source language.
pub fn identity_view(instance: &Instance, engine: &EngineId) -> TranslatedView {
    TranslatedView {
        instance_id: instance.id.clone(),
        tgt_lang: instance.source_lang.clone(),
        engine: engine.clone(),
        ctx1: AlignedContext::identity(&instance.context1),
        ctx2: AlignedContext::identity(&instance.context2),
    }
}

fn translated_context(
    ctx: &MarkedContext,
    src: &str,
    tgt: &str,
    engine: &dyn TranslationEngine,
    cache: &TranslationCache,
    sentinels: Option<&Sentinels>,
) -> Result<AlignedContext, TranslateError> {
    let sentence = translate(engine, src, tgt, &ctx.text, cache)?;
    let w1 = translate_word(engine, src, tgt, &ctx.surface1, cache)?;
    let w2 = translate_word(engine, src, tgt, &ctx.surface2, cache)?;
    let retranslate = |marked: &str| {
        translate(engine, src, tgt, marked, cache)
            .map(|r| r.translated_text)
            .ok()
    };
    let strategy = match sentinels {
        Some(s) => MarkerStrategy::Retranslate {
            sentinels: s.clone(),
            translate: &retranslate,
        },
        None => MarkerStrategy::Disabled,
    };
    Ok(align_pair(
        ctx,
        &sentence.translated_text,
        (&w1.translated_text, &w2.translated_text),
        &strategy,
    ))
}

fn build_view(
    instance: &Instance,
    lang: &str,
    engine: &dyn TranslationEngine,
    cache: &TranslationCache,
    sentinels: Option<&Sentinels>,
) -> Result<TranslatedView, TranslateError> {
    if lang == instance.source_lang {
        return Ok(identity_view(instance, engine.id()));
    }
    let src = instance.source_lang.as_str();
    Ok(TranslatedView {
        instance_id: instance.id.clone(),
        tgt_lang: lang.to_string(),
        engine: engine.id().clone(),
        ctx1: translated_context(&instance.context1, src, lang, engine, cache, sentinels)?,
        ctx2: translated_context(&instance.context2, src, lang, engine, cache, sentinels)?,
    })
}

/// One view per (instance, language). The work is spread over the current
/// rayon pool; output is ordered by (instance id, language). Failed items
/// land in the ledger and do not stop the others. `sentinels` enables the
/// marker rung of the alignment ladder.
pub fn build_views(
    instances: &[Instance],
    languages: &[String],
    engine: &dyn TranslationEngine,
    cache: &TranslationCache,
    sentinels: Option<&Sentinels>,
) -> ViewsOutcome {
    let mut langs: Vec<&str> = Vec::new();
    for l in languages {
        if !langs.contains(&l.as_str()) {
            langs.push(l);
        }
    }
    let jobs: Vec<(&Instance, &str)> = instances
        .iter()
        .flat_map(|inst| langs.iter().map(move |l| (inst, *l)))
        .collect();
    let results: Vec<Result<TranslatedView, ViewError>> = jobs
        .par_iter()
        .map(|(inst, lang)| {
            build_view(inst, lang, engine, cache, sentinels).map_err(|error| ViewError {
                instance_id: inst.id.clone(),
                tgt_lang: lang.to_string(),
                error: Box::new(error),
            })
        })
        .collect();

    let mut out = ViewsOutcome::default();
    for r in results {
        match r {
            Ok(v) => out.views.push(v),
            Err(e) => out.ledger.push(e),
        }
    }
    out.views
        .sort_by(|a, b| (&a.instance_id, &a.tgt_lang).cmp(&(&b.instance_id, &b.tgt_lang)));
    out.ledger
        .sort_by(|a, b| (&a.instance_id, &a.tgt_lang).cmp(&(&b.instance_id, &b.tgt_lang)));
    out
}
