//! Binary-relevance ranking metrics and the gain-relative-to-MF ratio.
//!
//! Per-user functions return `None` for users without relevant items; such
//! users are left out of every aggregate rather than counted as zero.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::context::{EvalContext, Fingerprint};

/// Relevant items of one user, sorted ascending.
#[derive(Debug, Clone, Copy)]
pub struct GroundTruth<'a>(&'a [u32]);

impl<'a> GroundTruth<'a> {
    /// `items` must be sorted ascending and free of duplicates, as rows of an
    /// [`InteractionStore`](crate::InteractionStore) are.
    pub fn new(items: &'a [u32]) -> Self {
        debug_assert!(items.windows(2).all(|w| w[0] < w[1]));
        Self(items)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    #[inline]
    pub fn contains(&self, item: u32) -> bool {
        self.0.binary_search(&item).is_ok()
    }
}

#[inline]
fn discount(position: usize) -> f64 {
    // position is 1-based
    1.0 / ((position + 1) as f64).log2()
}

fn hits_at_k(ranked: &[u32], truth: GroundTruth<'_>, k: usize) -> usize {
    ranked.iter().take(k).filter(|&&i| truth.contains(i)).count()
}

/// `Σ_{p ≤ K} [ranked[p] ∈ truth] / log2(p + 1)`. A ranking shorter than `k`
/// contributes nothing past its end.
pub fn dcg_at_k(ranked: &[u32], truth: GroundTruth<'_>, k: usize) -> f64 {
    ranked
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, &i)| truth.contains(i))
        .map(|(p, _)| discount(p + 1))
        .sum()
}

pub fn ideal_dcg(num_relevant: usize, k: usize) -> f64 {
    (1..=num_relevant.min(k)).map(discount).sum()
}

pub fn ndcg_at_k(ranked: &[u32], truth: GroundTruth<'_>, k: usize) -> Option<f64> {
    if truth.is_empty() {
        return None;
    }
    Some(dcg_at_k(ranked, truth, k) / ideal_dcg(truth.len(), k))
}

pub fn recall_at_k(ranked: &[u32], truth: GroundTruth<'_>, k: usize) -> Option<f64> {
    if truth.is_empty() {
        return None;
    }
    Some(hits_at_k(ranked, truth, k) as f64 / truth.len() as f64)
}

pub fn precision_at_k(ranked: &[u32], truth: GroundTruth<'_>, k: usize) -> Option<f64> {
    if truth.is_empty() || k == 0 {
        return None;
    }
    Some(hits_at_k(ranked, truth, k) as f64 / k as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricId {
    Ndcg,
    Recall,
    Precision,
}

impl MetricId {
    pub const ALL: [MetricId; 3] = [MetricId::Ndcg, MetricId::Recall, MetricId::Precision];

    pub fn label(&self) -> &'static str {
        match self {
            MetricId::Ndcg => "NDCG",
            MetricId::Recall => "Recall",
            MetricId::Precision => "Precision",
        }
    }

    /// Per-user value of this metric.
    pub fn eval(&self, ranked: &[u32], truth: GroundTruth<'_>, k: usize) -> Option<f64> {
        match self {
            MetricId::Ndcg => ndcg_at_k(ranked, truth, k),
            MetricId::Recall => recall_at_k(ranked, truth, k),
            MetricId::Precision => precision_at_k(ranked, truth, k),
        }
    }
}

impl fmt::Display for MetricId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MetricId::Ndcg => "ndcg",
            MetricId::Recall => "recall",
            MetricId::Precision => "precision",
        })
    }
}

impl FromStr for MetricId {
    type Err = MetricsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ndcg" => Ok(MetricId::Ndcg),
            "recall" => Ok(MetricId::Recall),
            "precision" => Ok(MetricId::Precision),
            _ => Err(MetricsError::UnknownMetric(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricScore {
    pub metric: MetricId,
    pub k: usize,
    pub value: f64,
}

impl fmt::Display for MetricScore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}={:.4}", self.metric.label(), self.k, self.value)
    }
}

/// Scores of one model under one context; the unit compared by [`grmf_x`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub model_id: String,
    pub ctx: EvalContext,
    pub ctx_fingerprint: Fingerprint,
    /// Non-context hyper-parameters the run was trained with.
    #[serde(default)]
    pub hyper_point: BTreeMap<String, f64>,
    pub metrics: Vec<MetricScore>,
    #[serde(default)]
    pub evaluated_users: usize,
    #[serde(default)]
    pub wall_seconds: f64,
}

impl RunRecord {
    pub fn new(model_id: impl Into<String>, ctx: EvalContext, metrics: Vec<MetricScore>) -> Self {
        Self {
            model_id: model_id.into(),
            ctx_fingerprint: ctx.fingerprint(),
            ctx,
            hyper_point: BTreeMap::new(),
            metrics,
            evaluated_users: 0,
            wall_seconds: 0.0,
        }
    }

    pub fn score(&self, metric: MetricId, k: usize) -> Option<f64> {
        self.metrics
            .iter()
            .find(|s| s.metric == metric && s.k == k)
            .map(|s| s.value)
    }

    /// The stored fingerprint agrees with the stored context.
    pub fn fingerprint_is_consistent(&self) -> bool {
        self.ctx.fingerprint() == self.ctx_fingerprint
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("runs come from different contexts ({candidate} vs baseline {baseline}); refusing to compare")]
    ContextViolation {
        candidate: Fingerprint,
        baseline: Fingerprint,
    },
    #[error("baseline score {0} is not positive; the relative gain is undefined")]
    UndefinedGain(f64),
    #[error("run `{model_id}` has no {metric}@{k} score")]
    MissingScore {
        model_id: String,
        metric: MetricId,
        k: usize,
    },
    #[error("unknown metric `{0}`")]
    UnknownMetric(String),
}

/// `candidate / baseline - 1` for two scores from the same context.
pub fn gain_ratio(candidate: f64, baseline: f64) -> Result<f64, MetricsError> {
    if baseline.is_nan() || baseline <= 0.0 {
        return Err(MetricsError::UndefinedGain(baseline));
    }
    Ok(candidate / baseline - 1.0)
}

/// Gain of `candidate` relative to the tuned MF `baseline` under one metric.
/// Both records must carry the same context fingerprint.
pub fn grmf_x(
    candidate: &RunRecord,
    baseline_mf: &RunRecord,
    metric: MetricId,
    k: usize,
) -> Result<f64, MetricsError> {
    if candidate.ctx_fingerprint != baseline_mf.ctx_fingerprint {
        return Err(MetricsError::ContextViolation {
            candidate: candidate.ctx_fingerprint,
            baseline: baseline_mf.ctx_fingerprint,
        });
    }
    let lookup = |r: &RunRecord| {
        r.score(metric, k).ok_or_else(|| MetricsError::MissingScore {
            model_id: r.model_id.clone(),
            metric,
            k,
        })
    };
    let c = lookup(candidate)?;
    let b = lookup(baseline_mf)?;
    gain_ratio(c, b)
}

/// Ratio as a percentage with two decimals, e.g. `13.67%`.
pub fn format_percent(ratio: f64) -> String {
    let pct = ratio * 100.0;
    // avoid "-0.00%"
    let pct = if pct.abs() < 0.005 { 0.0 } else { pct };
    format!("{pct:.2}%")
}
