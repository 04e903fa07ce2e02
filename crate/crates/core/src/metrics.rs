//! Correlation metrics and the task evaluator.
//!
//! Subtask 1 is scored by the uncentered Pearson correlation (cosine) of the
//! predicted and gold changes. Subtask 2 is scored by the harmonic mean of
//! Pearson and Spearman over the similarity scores of both contexts.
//!
//! All sums are compensated. Spearman ranks ties by their average position.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Instance;
use crate::vector::compensated_sum;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("series lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least 2 points, got {0}")]
    TooShort(usize),
    #[error("series contains a non-finite value at position {0}")]
    NonFinite(usize),
    #[error("{metric} is undefined: {reason}")]
    Undefined { metric: &'static str, reason: &'static str },
    #[error("prediction id {0:?} has no gold instance")]
    UnknownId(String),
    #[error("gold instance {0:?} has no gold scores")]
    MissingGold(String),
}

fn check(x: &[f64], y: &[f64]) -> Result<(), MetricError> {
    if x.len() != y.len() {
        return Err(MetricError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(MetricError::TooShort(x.len()));
    }
    if let Some(i) = x.iter().zip(y).position(|(a, b)| !a.is_finite() || !b.is_finite()) {
        return Err(MetricError::NonFinite(i));
    }
    Ok(())
}

fn mean(x: &[f64]) -> f64 {
    compensated_sum(x.iter().copied()) / x.len() as f64
}

/// Centered Pearson correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, MetricError> {
    check(x, y)?;
    let (mx, my) = (mean(x), mean(y));
    let sxy = compensated_sum(x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)));
    let sxx = compensated_sum(x.iter().map(|a| (a - mx) * (a - mx)));
    let syy = compensated_sum(y.iter().map(|b| (b - my) * (b - my)));
    if sxx == 0.0 || syy == 0.0 {
        return Err(MetricError::Undefined {
            metric: "pearson",
            reason: "zero variance",
        });
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// 1-based ranks; tied values share the mean of their positions.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && x[order[j]] == x[order[i]] {
            j += 1;
        }
        // positions i+1 ..= j
        let r = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = r;
        }
        i = j;
    }
    ranks
}

/// Pearson correlation of the average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64, MetricError> {
    check(x, y)?;
    pearson(&average_ranks(x), &average_ranks(y)).map_err(|_| MetricError::Undefined {
        metric: "spearman",
        reason: "all values tied",
    })
}

/// Cosine of the raw vectors, no mean removed.
pub fn uncentered_pearson(x: &[f64], y: &[f64]) -> Result<f64, MetricError> {
    check(x, y)?;
    let sxy = compensated_sum(x.iter().zip(y).map(|(a, b)| a * b));
    let sxx = compensated_sum(x.iter().map(|a| a * a));
    let syy = compensated_sum(y.iter().map(|b| b * b));
    if sxx == 0.0 || syy == 0.0 {
        return Err(MetricError::Undefined {
            metric: "uncentered_pearson",
            reason: "zero norm",
        });
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

pub fn harmonic_mean(p: f64, s: f64) -> Result<f64, MetricError> {
    if p + s == 0.0 {
        return Err(MetricError::Undefined {
            metric: "harmonic_mean",
            reason: "p + s == 0",
        });
    }
    Ok(2.0 * p * s / (p + s))
}

/// Predicted and gold values, aligned by id.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedSeries {
    pub ids: Vec<String>,
    pub predicted: Vec<f64>,
    pub gold: Vec<f64>,
}

impl PairedSeries {
    pub fn new(ids: Vec<String>, predicted: Vec<f64>, gold: Vec<f64>) -> Result<Self, MetricError> {
        check(&predicted, &gold)?;
        if ids.len() != predicted.len() {
            return Err(MetricError::LengthMismatch(ids.len(), predicted.len()));
        }
        Ok(PairedSeries { ids, predicted, gold })
    }

    pub fn len(&self) -> usize {
        self.predicted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.predicted.is_empty()
    }

    pub fn pearson(&self) -> Result<f64, MetricError> {
        pearson(&self.predicted, &self.gold)
    }

    pub fn spearman(&self) -> Result<f64, MetricError> {
        spearman(&self.predicted, &self.gold)
    }

    pub fn uncentered_pearson(&self) -> Result<f64, MetricError> {
        uncentered_pearson(&self.predicted, &self.gold)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Subtask {
    /// Change of similarity between the two contexts.
    #[serde(rename = "1")]
    Change,
    /// Similarity in each context.
    #[serde(rename = "2")]
    Similarity,
}

impl Subtask {
    pub fn number(&self) -> u8 {
        match self {
            Subtask::Change => 1,
            Subtask::Similarity => 2,
        }
    }

    pub fn from_number(n: u8) -> Option<Self> {
        match n {
            1 => Some(Subtask::Change),
            2 => Some(Subtask::Similarity),
            _ => None,
        }
    }

    pub fn primary_metric(&self) -> &'static str {
        match self {
            Subtask::Change => "uncentered_pearson",
            Subtask::Similarity => "harmonic_mean",
        }
    }
}

impl fmt::Display for Subtask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.number())
    }
}

/// How the two contexts' scores are combined for subtask 2.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pooling {
    /// One series: every context-1 score, then every context-2 score.
    #[default]
    Pooled,
    /// Metrics per context, then the mean of the two.
    PerContextMean,
}

impl fmt::Display for Pooling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(pooling_name(*self))
    }
}

/// Predictions for one subtask, keyed by instance id.
#[derive(Debug, Clone, PartialEq)]
pub enum Predictions {
    Change(BTreeMap<String, f64>),
    Similarity(BTreeMap<String, (f64, f64)>),
}

impl Predictions {
    pub fn subtask(&self) -> Subtask {
        match self {
            Predictions::Change(_) => Subtask::Change,
            Predictions::Similarity(_) => Subtask::Similarity,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Predictions::Change(m) => m.len(),
            Predictions::Similarity(m) => m.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn contains(&self, id: &str) -> bool {
        match self {
            Predictions::Change(m) => m.contains_key(id),
            Predictions::Similarity(m) => m.contains_key(id),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub subtask: Subtask,
    pub pooling: Option<Pooling>,
    /// Points in each correlated series (instances, not pooled points).
    pub n: usize,
    /// The subtask's official score.
    pub score: f64,
    pub metrics: Vec<(String, f64)>,
    pub flags: Vec<String>,
}

impl EvalReport {
    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.iter().find(|(k, _)| k == name).map(|(_, v)| *v)
    }

    /// Aligned two-column table for terminals.
    pub fn to_table(&self) -> String {
        let mut rows = vec![
            ("subtask".to_string(), self.subtask.to_string()),
            ("n".to_string(), self.n.to_string()),
        ];
        if let Some(p) = self.pooling {
            rows.push(("pooling".into(), pooling_name(p).into()));
        }
        rows.extend(self.metrics.iter().map(|(k, v)| (k.clone(), format!("{v:.6}"))));
        rows.push(("score".into(), format!("{:.6}", self.score)));
        if !self.flags.is_empty() {
            rows.push(("flags".into(), self.flags.join(",")));
        }
        let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        rows.iter().map(|(k, v)| format!("{k:<width$}  {v}\n")).collect()
    }

    /// One flat JSON object, no trailing newline.
    pub fn to_json_line(&self) -> String {
        let mut obj = serde_json::Map::new();
        obj.insert("subtask".into(), self.subtask.number().into());
        obj.insert("n".into(), self.n.into());
        if let Some(p) = self.pooling {
            obj.insert("pooling".into(), pooling_name(p).into());
        }
        for (k, v) in &self.metrics {
            obj.insert(k.clone(), (*v).into());
        }
        obj.insert("score".into(), self.score.into());
        obj.insert("flags".into(), self.flags.join(",").into());
        serde_json::Value::Object(obj).to_string()
    }
}

fn pooling_name(p: Pooling) -> &'static str {
    match p {
        Pooling::Pooled => "pooled",
        Pooling::PerContextMean => "per-context-mean",
    }
}

/// Scores `predictions` against the gold scores of `gold`. Points follow
/// the order of `gold`; gold instances without a prediction are skipped
/// and flagged.
pub fn evaluate(predictions: &Predictions, gold: &[Instance], pooling: Pooling) -> Result<EvalReport, MetricError> {
    let by_id: HashMap<&str, &Instance> = gold.iter().map(|i| (i.id.as_str(), i)).collect();
    let ids: Vec<&str> = match predictions {
        Predictions::Change(m) => m.keys().map(String::as_str).collect(),
        Predictions::Similarity(m) => m.keys().map(String::as_str).collect(),
    };
    for id in &ids {
        let inst = by_id.get(id).ok_or_else(|| MetricError::UnknownId(id.to_string()))?;
        if inst.gold.is_none() {
            return Err(MetricError::MissingGold(id.to_string()));
        }
    }
    let covered: Vec<&Instance> = gold.iter().filter(|i| predictions.contains(&i.id)).collect();
    let mut flags = Vec::new();
    if covered.len() < gold.len() {
        flags.push(format!("unpredicted={}", gold.len() - covered.len()));
    }
    let point_ids: Vec<String> = covered.iter().map(|i| i.id.clone()).collect();
    let golds: Vec<_> = covered.iter().map(|i| i.gold.expect("checked above")).collect();

    match predictions {
        Predictions::Change(m) => {
            let pred: Vec<f64> = point_ids.iter().map(|id| m[id]).collect();
            let gold_delta: Vec<f64> = golds.iter().map(|g| g.delta()).collect();
            let series = PairedSeries::new(point_ids, pred, gold_delta)?;
            let score = series.uncentered_pearson()?;
            Ok(EvalReport {
                subtask: Subtask::Change,
                pooling: None,
                n: series.len(),
                score,
                metrics: vec![("uncentered_pearson".into(), score)],
                flags,
            })
        }
        Predictions::Similarity(m) => {
            let p1: Vec<f64> = point_ids.iter().map(|id| m[id].0).collect();
            let p2: Vec<f64> = point_ids.iter().map(|id| m[id].1).collect();
            let g1: Vec<f64> = golds.iter().map(|g| g.sim1_mean).collect();
            let g2: Vec<f64> = golds.iter().map(|g| g.sim2_mean).collect();
            let n = point_ids.len();
            let (p, s, h) = match pooling {
                Pooling::Pooled => {
                    let ids2: Vec<String> = point_ids
                        .iter()
                        .map(|id| format!("{id}#1"))
                        .chain(point_ids.iter().map(|id| format!("{id}#2")))
                        .collect();
                    let series = PairedSeries::new(ids2, [p1, p2].concat(), [g1, g2].concat())?;
                    let (p, s) = (series.pearson()?, series.spearman()?);
                    (p, s, harmonic_mean(p, s)?)
                }
                Pooling::PerContextMean => {
                    let (pa, sa) = (pearson(&p1, &g1)?, spearman(&p1, &g1)?);
                    let (pb, sb) = (pearson(&p2, &g2)?, spearman(&p2, &g2)?);
                    let (ha, hb) = (harmonic_mean(pa, sa)?, harmonic_mean(pb, sb)?);
                    ((pa + pb) / 2.0, (sa + sb) / 2.0, (ha + hb) / 2.0)
                }
            };
            if p <= 0.0 || s <= 0.0 {
                flags.push("non-interpretable-harmonic".into());
            }
            Ok(EvalReport {
                subtask: Subtask::Similarity,
                pooling: Some(pooling),
                n,
                score: h,
                metrics: vec![
                    ("pearson".into(), p),
                    ("spearman".into(), s),
                    ("harmonic_mean".into(), h),
                ],
                flags,
            })
        }
    }
}
