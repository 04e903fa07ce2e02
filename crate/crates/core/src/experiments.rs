//! Ablation drivers: weight sweeps, greedy language addition, engine
//! comparison and the named official configurations.
//!
//! Every driver works on a precomputed [`ChannelTable`], so one encoder
//! pass serves any number of weight and language choices. Evaluations run
//! on the current rayon pool; results are assembled in configuration order.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::config::ExperimentConfig;
use crate::dataset::Instance;
use crate::metrics::{evaluate, EvalReport, Pooling, Subtask};
use crate::scoring::{predictions, score_with_table, ChannelTable, ScoreRun};
use crate::translation::EngineId;

/// Languages of the full ensemble.
pub const ALL_LANGUAGES: [&str; 11] = ["en", "es", "it", "bs", "de", "el", "pl", "pt", "ru", "sr", "tr"];

/// Improvements at or below this are treated as ties.
pub const GAIN_EPSILON: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("empty weight grid")]
    EmptyGrid,
    #[error("base configuration failed: {0}")]
    Base(String),
    #[error("channel table lacks languages {missing:?}; translate the dataset into them first (e.g. `polysim translate --lang {}`)", missing.join(","))]
    MissingLanguages { missing: Vec<String> },
    #[error("dataset has no gold scores for {0}")]
    MissingGold(String),
}

/// One evaluation, flattened for CSV output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalRow {
    pub config_fingerprint: String,
    pub languages: String,
    pub alpha: f64,
    pub beta: f64,
    pub engine: String,
    pub subtask: u8,
    pub metric: String,
    pub value: Option<f64>,
    pub n: usize,
    pub flags: String,
}

impl EvalRow {
    pub fn succeeded(&self) -> bool {
        self.value.is_some()
    }
}

/// Effective languages as `src+extra+...`; `*` stands for a mixed source.
fn language_label(instances: &[Instance], extras: &[String]) -> String {
    let mut sources: Vec<&str> = instances.iter().map(|i| i.source_lang.as_str()).collect();
    sources.sort_unstable();
    sources.dedup();
    let src = match sources.as_slice() {
        [one] => one.to_string(),
        _ => "*".to_string(),
    };
    let langs = match sources.as_slice() {
        [one] => crate::config::effective_languages(one, extras),
        _ => std::iter::once(src.clone()).chain(extras.iter().cloned()).collect(),
    };
    langs.join("+")
}

/// Scores `instances` under `config` and evaluates one subtask.
pub fn evaluate_config(
    instances: &[Instance],
    table: &ChannelTable,
    config: &ExperimentConfig,
    subtask: Subtask,
    pooling: Pooling,
) -> (EvalRow, Option<EvalReport>) {
    let mut row = EvalRow {
        config_fingerprint: config.fingerprint(),
        languages: language_label(instances, &config.languages),
        alpha: config.alpha,
        beta: config.beta,
        engine: config.engine.to_string(),
        subtask: subtask.number(),
        metric: subtask.primary_metric().to_string(),
        value: None,
        n: 0,
        flags: String::new(),
    };
    let outcome = score_with_table(instances, table, config)
        .map_err(|e| e.to_string())
        .and_then(|run| {
            let failed = run.failures.len();
            if run.sheets.is_empty() {
                return Err(format!("no instance scored ({failed} without signal)"));
            }
            let report = evaluate(&predictions(&run.sheets, subtask), instances, pooling).map_err(|e| e.to_string())?;
            Ok(report)
        });
    match outcome {
        Ok(report) => {
            row.value = Some(report.score);
            row.n = report.n;
            row.flags = report.flags.join(";");
            (row, Some(report))
        }
        Err(msg) => {
            row.flags = format!("failed: {msg}");
            (row, None)
        }
    }
}

fn write_rows<T: Serialize>(rows: &[T], out: impl Write) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Grid points `(i/10, (10-i)/10)` for `i = 0..=10`.
pub fn default_grid() -> Vec<(f64, f64)> {
    let mut grid: Vec<(f64, f64)> = (0..=10).map(|i| (i as f64 / 10.0, (10 - i) as f64 / 10.0)).collect();
    for pair in OfficialRow::ALL.iter().map(OfficialRow::weights) {
        if !grid.contains(&pair) {
            grid.push(pair);
        }
    }
    grid
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub rows: Vec<EvalRow>,
}

impl SweepTable {
    pub fn write_csv(&self, out: impl Write) -> csv::Result<()> {
        write_rows(&self.rows, out)
    }

    /// `subtask,alpha,beta,value` for plotting score against alpha.
    pub fn write_series(&self, out: impl Write) -> csv::Result<()> {
        #[derive(Serialize)]
        struct Point {
            subtask: u8,
            alpha: f64,
            beta: f64,
            value: Option<f64>,
        }
        let pts: Vec<Point> = self
            .rows
            .iter()
            .map(|r| Point {
                subtask: r.subtask,
                alpha: r.alpha,
                beta: r.beta,
                value: r.value,
            })
            .collect();
        write_rows(&pts, out)
    }

    /// The grid point with the highest score for `subtask`.
    pub fn best(&self, subtask: Subtask) -> Option<&EvalRow> {
        self.rows
            .iter()
            .filter(|r| r.subtask == subtask.number() && r.succeeded())
            .fold(None, |best: Option<&EvalRow>, r| match best {
                Some(b) if b.value >= r.value => Some(b),
                _ => Some(r),
            })
    }
}

/// One row per (grid point, subtask), in grid order. Failed evaluations
/// are kept as rows without a value.
pub fn sweep_alpha_beta(
    instances: &[Instance],
    table: &ChannelTable,
    base: &ExperimentConfig,
    grid: &[(f64, f64)],
    subtasks: &[Subtask],
    pooling: Pooling,
) -> Result<SweepTable, ExperimentError> {
    if grid.is_empty() {
        return Err(ExperimentError::EmptyGrid);
    }
    let cells: Vec<(f64, f64, Subtask)> = grid
        .iter()
        .flat_map(|&(a, b)| subtasks.iter().map(move |&s| (a, b, s)))
        .collect();
    let rows = cells
        .par_iter()
        .map(|&(a, b, s)| evaluate_config(instances, table, &base.with_weights(a, b), s, pooling).0)
        .collect();
    Ok(SweepTable { rows })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GreedyStep {
    pub iteration: usize,
    /// Language tried this step; `None` for the source-only base.
    pub candidate: Option<String>,
    pub row: EvalRow,
    pub kept: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GreedyTrace {
    pub steps: Vec<GreedyStep>,
    /// Languages kept, in the order they were added.
    pub selected: Vec<String>,
    /// Score of the base and after each kept addition.
    pub path: Vec<f64>,
}

impl GreedyTrace {
    pub fn write_csv(&self, out: impl Write) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "iteration",
            "candidate",
            "kept",
            "config_fingerprint",
            "languages",
            "alpha",
            "beta",
            "engine",
            "subtask",
            "metric",
            "value",
            "n",
            "flags",
        ])?;
        for s in &self.steps {
            let r = &s.row;
            w.write_record([
                s.iteration.to_string(),
                s.candidate.clone().unwrap_or_default(),
                s.kept.to_string(),
                r.config_fingerprint.clone(),
                r.languages.clone(),
                r.alpha.to_string(),
                r.beta.to_string(),
                r.engine.clone(),
                r.subtask.to_string(),
                r.metric.clone(),
                r.value.map(|v| v.to_string()).unwrap_or_default(),
                r.n.to_string(),
                r.flags.clone(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// `n_languages,languages,value` along the kept path.
    pub fn write_series(&self, out: impl Write) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["n_languages", "languages", "value"])?;
        for (k, score) in self.path.iter().enumerate() {
            let langs = self.selected[..k].join("+");
            w.write_record([(k + 1).to_string(), langs, score.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Starts from the source language alone and repeatedly adds the candidate
/// with the largest gain, until no candidate improves the score by more
/// than [`GAIN_EPSILON`]. Ties go to the earlier candidate.
pub fn greedy_language_addition(
    instances: &[Instance],
    table: &ChannelTable,
    base: &ExperimentConfig,
    candidates: &[String],
    subtask: Subtask,
    pooling: Pooling,
) -> Result<GreedyTrace, ExperimentError> {
    let base_cfg = base.with_languages(Vec::new());
    let (row, _) = evaluate_config(instances, table, &base_cfg, subtask, pooling);
    let Some(mut current) = row.value else {
        return Err(ExperimentError::Base(row.flags));
    };
    let mut trace = GreedyTrace {
        steps: vec![GreedyStep {
            iteration: 0,
            candidate: None,
            row,
            kept: true,
        }],
        selected: Vec::new(),
        path: vec![current],
    };
    let mut remaining: Vec<String> = Vec::new();
    for c in candidates {
        if !remaining.contains(c) {
            remaining.push(c.clone());
        }
    }

    let mut iteration = 1;
    while !remaining.is_empty() {
        let rows: Vec<EvalRow> = remaining
            .par_iter()
            .map(|c| {
                let mut langs = trace.selected.clone();
                langs.push(c.clone());
                evaluate_config(instances, table, &base.with_languages(langs), subtask, pooling).0
            })
            .collect();
        let mut best: Option<(usize, f64)> = None;
        for (i, r) in rows.iter().enumerate() {
            if let Some(v) = r.value {
                if best.is_none_or(|(_, b)| v > b) {
                    best = Some((i, v));
                }
            }
        }
        let winner = best.filter(|&(_, v)| v > current + GAIN_EPSILON);
        for (i, row) in rows.into_iter().enumerate() {
            trace.steps.push(GreedyStep {
                iteration,
                candidate: Some(remaining[i].clone()),
                row,
                kept: winner.is_some_and(|(w, _)| w == i),
            });
        }
        let Some((w, v)) = winner else { break };
        trace.selected.push(remaining.remove(w));
        trace.path.push(v);
        current = v;
        iteration += 1;
    }
    Ok(trace)
}

/// Channels of the dataset as translated by one engine.
#[derive(Debug, Clone)]
pub struct EngineChannels {
    pub engine: EngineId,
    pub table: ChannelTable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineTable {
    pub rows: Vec<EvalRow>,
}

impl EngineTable {
    pub fn write_csv(&self, out: impl Write) -> csv::Result<()> {
        write_rows(&self.rows, out)
    }

    /// `engine,languages,subtask,value`.
    pub fn write_series(&self, out: impl Write) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["engine", "languages", "subtask", "value"])?;
        for r in &self.rows {
            w.write_record([
                r.engine.clone(),
                r.languages.clone(),
                r.subtask.to_string(),
                r.value.map(|v| v.to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Evaluates the same configuration under each engine's channels, split
/// by source language. Rows are ordered by engine, source, subtask.
pub fn compare_engines(
    instances: &[Instance],
    engines: &[EngineChannels],
    config: &ExperimentConfig,
    subtasks: &[Subtask],
    pooling: Pooling,
) -> EngineTable {
    let mut sources: Vec<&str> = instances.iter().map(|i| i.source_lang.as_str()).collect();
    sources.sort_unstable();
    sources.dedup();
    let groups: Vec<Vec<Instance>> = sources
        .iter()
        .map(|s| instances.iter().filter(|i| i.source_lang == *s).cloned().collect())
        .collect();
    let cells: Vec<(&EngineChannels, &Vec<Instance>, Subtask)> = engines
        .iter()
        .flat_map(|e| groups.iter().flat_map(move |g| subtasks.iter().map(move |&s| (e, g, s))))
        .collect();
    let rows = cells
        .par_iter()
        .map(|(e, group, s)| {
            let cfg = ExperimentConfig {
                engine: e.engine.clone(),
                ..config.clone()
            };
            evaluate_config(group, &e.table, &cfg, *s, pooling).0
        })
        .collect();
    EngineTable { rows }
}

/// Named configurations of the official submission.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OfficialRow {
    SourceOnly,
    PtElTrRu,
    EsItPtDe,
    AllLanguages,
    AllLanguagesContextual,
}

impl OfficialRow {
    pub const ALL: [OfficialRow; 5] = [
        OfficialRow::SourceOnly,
        OfficialRow::PtElTrRu,
        OfficialRow::EsItPtDe,
        OfficialRow::AllLanguages,
        OfficialRow::AllLanguagesContextual,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            OfficialRow::SourceOnly => "none",
            OfficialRow::PtElTrRu => "pt-el-tr-ru",
            OfficialRow::EsItPtDe => "es-it-pt-de",
            OfficialRow::AllLanguages => "all",
            OfficialRow::AllLanguagesContextual => "all-contextual",
        }
    }

    /// `(alpha, beta)`.
    pub fn weights(&self) -> (f64, f64) {
        match self {
            OfficialRow::SourceOnly => (0.7, 0.3),
            OfficialRow::PtElTrRu => (0.8, 0.2),
            OfficialRow::EsItPtDe => (0.6, 0.4),
            OfficialRow::AllLanguages => (0.7, 0.3),
            OfficialRow::AllLanguagesContextual => (1.0, 0.0),
        }
    }

    pub fn extras(&self) -> Vec<String> {
        let langs: &[&str] = match self {
            OfficialRow::SourceOnly => &[],
            OfficialRow::PtElTrRu => &["pt", "el", "tr", "ru"],
            OfficialRow::EsItPtDe => &["es", "it", "pt", "de"],
            OfficialRow::AllLanguages | OfficialRow::AllLanguagesContextual => &ALL_LANGUAGES,
        };
        langs.iter().map(|l| l.to_string()).collect()
    }

    pub fn config(&self, base: &ExperimentConfig) -> ExperimentConfig {
        let (a, b) = self.weights();
        base.with_weights(a, b).with_languages(self.extras())
    }
}

impl fmt::Display for OfficialRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OfficialRow {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        OfficialRow::ALL.into_iter().find(|r| r.name() == s).ok_or_else(|| {
            let names: Vec<&str> = OfficialRow::ALL.iter().map(|r| r.name()).collect();
            format!("unknown row {s:?}; expected one of {}", names.join(", "))
        })
    }
}

#[derive(Debug, Clone)]
pub struct OfficialRun {
    pub row: OfficialRow,
    pub config: ExperimentConfig,
    pub run: ScoreRun,
    pub reports: Vec<(Subtask, Result<EvalReport, String>)>,
}

/// Scores and evaluates both subtasks under a named configuration.
pub fn run_official(
    instances: &[Instance],
    table: &ChannelTable,
    base: &ExperimentConfig,
    row: OfficialRow,
    pooling: Pooling,
) -> Result<OfficialRun, ExperimentError> {
    let config = row.config(base);
    let have = table.languages();
    let sources: Vec<&str> = instances.iter().map(|i| i.source_lang.as_str()).collect();
    let missing: Vec<String> = config
        .languages
        .iter()
        .filter(|l| !have.contains(l) && !sources.contains(&l.as_str()))
        .cloned()
        .collect();
    if !missing.is_empty() {
        return Err(ExperimentError::MissingLanguages { missing });
    }
    if let Some(i) = instances.iter().find(|i| i.gold.is_none()) {
        return Err(ExperimentError::MissingGold(i.id.clone()));
    }
    let run = score_with_table(instances, table, &config).map_err(|e| ExperimentError::Base(e.to_string()))?;
    let reports = [Subtask::Change, Subtask::Similarity]
        .into_iter()
        .map(|s| {
            let report = if run.sheets.is_empty() {
                Err("no instance scored".to_string())
            } else {
                evaluate(&predictions(&run.sheets, s), instances, pooling).map_err(|e| e.to_string())
            };
            (s, report)
        })
        .collect();
    Ok(OfficialRun {
        row,
        config,
        run,
        reports,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{GoldScores, MarkedContext};
    use crate::encoder::BackendConfig;
    use crate::scoring::ChannelScores;
    use crate::text::CharSpan;
    use crate::translation::AlignMethod;

    /// Gold from a fixed pseudo-random sequence; channels per language are
    /// built by `channel(lang, instance index, context, gold)`.
    fn synthetic(
        n: usize,
        langs: &[&str],
        channel: impl Fn(&str, usize, u8, f64) -> (Option<f64>, Option<f64>),
    ) -> (Vec<Instance>, ChannelTable) {
        let ctx = MarkedContext::new("a b", CharSpan::new(0, 1), CharSpan::new(2, 3)).unwrap();
        let gold = |k: usize| ((k * 7919 % 101) as f64 / 101.0, (k * 104729 % 97) as f64 / 97.0);
        let instances: Vec<Instance> = (0..n)
            .map(|k| Instance {
                id: k.to_string(),
                source_lang: "en".into(),
                word1: "a".into(),
                word2: "b".into(),
                context1: ctx.clone(),
                context2: ctx.clone(),
                gold: Some(GoldScores {
                    sim1_mean: gold(k).0,
                    sim2_mean: gold(k).1,
                }),
            })
            .collect();
        let mut rows = Vec::new();
        for k in 0..n {
            for lang in langs {
                for (c, g) in [(1u8, gold(k).0), (2u8, gold(k).1)] {
                    let (bert, we) = channel(lang, k, c, g);
                    rows.push(ChannelScores {
                        instance_id: k.to_string(),
                        lang: lang.to_string(),
                        context_index: c,
                        sim_we: we,
                        sim_bert: bert,
                        alignment: (AlignMethod::Exact, AlignMethod::Exact),
                        absent: vec![],
                    });
                }
            }
        }
        (instances, ChannelTable::from_rows(rows))
    }

    fn noise(k: usize, c: u8, salt: usize) -> f64 {
        let x = ((k * 31 + c as usize * 17 + salt * 13) % 23) as f64;
        x / 23.0
    }

    fn base() -> ExperimentConfig {
        ExperimentConfig {
            alpha: 0.7,
            beta: 0.3,
            languages: vec![],
            engine: EngineId::fixture(),
            backend: BackendConfig::SyntheticHash { dim: 4, seed: 0 },
        }
    }

    #[test]
    fn default_grid_contents() {
        let g = default_grid();
        assert_eq!(g.len(), 11);
        assert!(g.contains(&(0.7, 0.3)) && g.contains(&(0.8, 0.2)) && g.contains(&(0.6, 0.4)));
        assert!(g.iter().all(|(a, b)| a + b == 1.0));
    }

    #[test]
    fn sweep_singleton_matches_direct_evaluation() {
        let (insts, table) = synthetic(12, &["en"], |_, k, c, g| (Some(g + 0.1 * noise(k, c, 1)), Some(noise(k, c, 2))));
        let t = sweep_alpha_beta(&insts, &table, &base(), &[(0.7, 0.3)], &[Subtask::Similarity], Pooling::Pooled).unwrap();
        let (_, report) = evaluate_config(&insts, &table, &base(), Subtask::Similarity, Pooling::Pooled);
        assert_eq!(t.rows.len(), 1);
        assert_eq!(t.rows[0].value, Some(report.unwrap().score));
        let dup = sweep_alpha_beta(&insts, &table, &base(), &[(0.5, 0.5), (0.5, 0.5)], &[Subtask::Change], Pooling::Pooled)
            .unwrap();
        assert_eq!(dup.rows[0], dup.rows[1]);
        assert!(sweep_alpha_beta(&insts, &table, &base(), &[], &[Subtask::Change], Pooling::Pooled).is_err());
    }

    #[test]
    fn sweep_prefers_the_gold_channel() {
        let (insts, table) = synthetic(30, &["en"], |_, k, c, g| (Some(g), Some(noise(k, c, 5))));
        let t = sweep_alpha_beta(&insts, &table, &base(), &default_grid(), &[Subtask::Similarity], Pooling::Pooled).unwrap();
        let best = t.best(Subtask::Similarity).unwrap();
        assert_eq!((best.alpha, best.beta), (1.0, 0.0));
        assert!((best.value.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn greedy_picks_the_gold_language_first() {
        let langs = ["en", "es", "it", "pt", "de"];
        let (insts, table) = synthetic(25, &langs, |lang, k, c, g| match lang {
            "pt" => (Some(g), Some(g)),
            "en" => (Some(0.5 * g + 0.5 * noise(k, c, 0)), Some(noise(k, c, 9))),
            _ => (Some(noise(k, c, lang.len() + lang.as_bytes()[0] as usize)), Some(noise(k, c, 3))),
        });
        let candidates: Vec<String> = ["es", "it", "pt", "de"].iter().map(|s| s.to_string()).collect();
        let trace = greedy_language_addition(&insts, &table, &base(), &candidates, Subtask::Similarity, Pooling::Pooled)
            .unwrap();
        assert_eq!(trace.selected.first().map(String::as_str), Some("pt"));
        assert!(trace.path.windows(2).all(|w| w[1] >= w[0]));
        let kept: Vec<&GreedyStep> = trace.steps.iter().filter(|s| s.iteration == 1 && s.kept).collect();
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].candidate.as_deref(), Some("pt"));
    }

    #[test]
    fn greedy_plateau_and_empty_candidates() {
        let langs = ["en", "es", "it"];
        let (insts, table) = synthetic(10, &langs, |_, k, c, _| (Some(noise(k, c, 0)), Some(noise(k, c, 4))));
        let cands = vec!["es".to_string(), "it".to_string()];
        let t = greedy_language_addition(&insts, &table, &base(), &cands, Subtask::Change, Pooling::Pooled).unwrap();
        assert!(t.selected.is_empty());
        assert_eq!(t.steps.len(), 1 + cands.len());
        let t = greedy_language_addition(&insts, &table, &base(), &[], Subtask::Change, Pooling::Pooled).unwrap();
        assert_eq!(t.steps.len(), 1);
        assert_eq!(t.path.len(), 1);
    }

    #[test]
    fn identical_engines_score_identically() {
        let (insts, table) = synthetic(10, &["en", "it"], |_, k, c, g| (Some(g + noise(k, c, 1)), Some(noise(k, c, 2))));
        let engines = vec![
            EngineChannels {
                engine: EngineId::new("alpha").unwrap(),
                table: table.clone(),
            },
            EngineChannels {
                engine: EngineId::new("beta").unwrap(),
                table,
            },
        ];
        let cfg = base().with_languages(vec!["it".into()]);
        let t = compare_engines(&insts, &engines, &cfg, &[Subtask::Change, Subtask::Similarity], Pooling::Pooled);
        assert_eq!(t.rows.len(), 4);
        assert_eq!(t.rows[0].value, t.rows[2].value);
        assert_eq!(t.rows[1].value, t.rows[3].value);
        assert_eq!(t.rows[0].languages, "en+it");
    }

    #[test]
    fn official_rows() {
        assert_eq!("es-it-pt-de".parse::<OfficialRow>().unwrap(), OfficialRow::EsItPtDe);
        assert!("eleven".parse::<OfficialRow>().is_err());
        assert_eq!(OfficialRow::AllLanguages.extras().len(), 11);
        let (insts, table) = synthetic(6, &["en"], |_, k, c, g| (Some(g), Some(noise(k, c, 1))));
        let err = run_official(&insts, &table, &base(), OfficialRow::PtElTrRu, Pooling::Pooled).unwrap_err();
        assert!(err.to_string().contains("pt"));
        let run = run_official(&insts, &table, &base(), OfficialRow::SourceOnly, Pooling::Pooled).unwrap();
        assert_eq!(run.reports.len(), 2);
        assert!(run.reports.iter().all(|(_, r)| r.is_ok()));
    }

    #[test]
    fn csv_outputs_have_headers() {
        let (insts, table) = synthetic(8, &["en", "it"], |_, k, c, g| (Some(g), Some(noise(k, c, 1))));
        let t = sweep_alpha_beta(&insts, &table, &base(), &[(1.0, 0.0)], &[Subtask::Change], Pooling::Pooled).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("config_fingerprint,languages,alpha,beta,engine,subtask,metric,value,n,flags\n"));
        let trace =
            greedy_language_addition(&insts, &table, &base(), &["it".into()], Subtask::Change, Pooling::Pooled).unwrap();
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("iteration,candidate,kept,config_fingerprint"));
    }
}
