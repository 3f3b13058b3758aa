//! Mini-batched full-catalog evaluation.
//!
//! Every user with a non-empty test row is ranked against all items minus
//! their training positives; the top `max(k_list)` list is retrieved once and
//! every metric at every K is read off it. Per-batch sums are merged with
//! compensated summation, so the result does not depend on the batch size
//! beyond floating-point reassociation.

use std::time::Instant;

use thiserror::Error;

use crate::context::EvalContext;
use crate::data::Split;
use crate::matrix::Matrix;
use crate::metrics::{GroundTruth, MetricId, MetricScore, RunRecord};
use crate::model::ModelParams;
use crate::scalar::{CompensatedSum, Scalar};
use crate::search::{search_exact, select_top_k, MaskSpec, QueryHits, SearchError, SearchOptions};

pub const DEFAULT_EVAL_BATCH: usize = 1024;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("no user has test interactions; nothing to evaluate")]
    EmptyEvaluation,
    #[error("scorer contract violated: {0}")]
    Contract(String),
    #[error("batch_size must be at least 1")]
    ZeroBatch,
    #[error(transparent)]
    Search(#[from] SearchError),
}

#[derive(Debug, Clone)]
pub struct EvalRequest<'a, T> {
    pub model_id: String,
    /// Final embeddings (already propagated for graph models).
    pub params: &'a ModelParams<T>,
    pub split: &'a Split,
    pub ctx: &'a EvalContext,
    /// Users per block.
    pub batch_size: usize,
    /// Exclude training positives from the ranking. Turning this off is only
    /// meant for sensitivity checks.
    pub mask_train: bool,
    pub search: SearchOptions,
}

impl<'a, T: Scalar> EvalRequest<'a, T> {
    pub fn new(
        model_id: impl Into<String>,
        params: &'a ModelParams<T>,
        split: &'a Split,
        ctx: &'a EvalContext,
    ) -> Self {
        Self {
            model_id: model_id.into(),
            params,
            split,
            ctx,
            batch_size: DEFAULT_EVAL_BATCH,
            mask_train: true,
            search: SearchOptions::default(),
        }
    }

    pub fn with_batch_size(mut self, batch_size: usize) -> Self {
        self.batch_size = batch_size;
        self
    }
}

/// Metric sums and user count of one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialSums {
    pub keys: Vec<(MetricId, usize)>,
    pub sums: Vec<CompensatedSum>,
    pub users: usize,
}

impl PartialSums {
    pub fn new(k_list: &[usize]) -> Self {
        let keys: Vec<(MetricId, usize)> = k_list
            .iter()
            .flat_map(|&k| MetricId::ALL.into_iter().map(move |m| (m, k)))
            .collect();
        Self {
            sums: vec![CompensatedSum::new(); keys.len()],
            keys,
            users: 0,
        }
    }

    /// Folds `other` into `self`; both must cover the same metrics.
    pub fn merge(&mut self, other: &PartialSums) -> Result<(), EvalError> {
        if self.keys != other.keys {
            return Err(EvalError::Dimension("partials cover different metrics".into()));
        }
        for (t, s) in self.sums.iter_mut().zip(&other.sums) {
            t.merge(s);
        }
        self.users += other.users;
        Ok(())
    }

    /// Adds one user's metrics. Users with empty truth are ignored.
    pub fn add_user(&mut self, ranked: &[u32], truth: GroundTruth<'_>) {
        if truth.is_empty() {
            return;
        }
        for ((m, k), s) in self.keys.iter().zip(self.sums.iter_mut()) {
            s.add(m.eval(ranked, truth, *k).expect("non-empty truth"));
        }
        self.users += 1;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricMean {
    pub metric: MetricId,
    pub k: usize,
    pub mean: f64,
    pub users: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub entries: Vec<MetricMean>,
    pub evaluated_users: usize,
    pub wall_seconds: f64,
    /// Largest user block and item count scored together.
    pub peak_batch: (usize, usize),
}

impl MetricReport {
    pub fn scores(&self) -> Vec<MetricScore> {
        self.entries
            .iter()
            .map(|e| MetricScore {
                metric: e.metric,
                k: e.k,
                value: e.mean,
            })
            .collect()
    }

    pub fn into_record(self, model_id: impl Into<String>, ctx: &EvalContext) -> RunRecord {
        let mut r = RunRecord::new(model_id, ctx.clone(), self.scores());
        r.evaluated_users = self.evaluated_users;
        r.wall_seconds = self.wall_seconds;
        r
    }
}

/// Merges per-batch sums: `mean = Σ sums / Σ users` per metric.
pub fn aggregate(partials: &[PartialSums]) -> Result<MetricReport, EvalError> {
    let first = partials.first().ok_or(EvalError::EmptyEvaluation)?;
    let mut total = PartialSums {
        keys: first.keys.clone(),
        sums: vec![CompensatedSum::new(); first.keys.len()],
        users: 0,
    };
    for p in partials {
        total.merge(p)?;
    }
    if total.users == 0 {
        return Err(EvalError::EmptyEvaluation);
    }
    let n = total.users as f64;
    Ok(MetricReport {
        entries: total
            .keys
            .iter()
            .zip(&total.sums)
            .map(|(&(metric, k), s)| MetricMean {
                metric,
                k,
                mean: s.value() / n,
                users: total.users,
            })
            .collect(),
        evaluated_users: total.users,
        wall_seconds: 0.0,
        peak_batch: (0, 0),
    })
}

fn eval_users(split: &Split) -> Vec<u32> {
    (0..split.num_users())
        .filter(|&u| split.test().user_degree(u) > 0)
        .map(|u| u as u32)
        .collect()
}

fn partial_for_batch<T: Scalar>(
    users: &[u32],
    hits: &[QueryHits<T>],
    split: &Split,
    k_list: &[usize],
) -> PartialSums {
    let mut p = PartialSums::new(k_list);
    for (&u, h) in users.iter().zip(hits) {
        p.add_user(&h.ids, GroundTruth::new(split.test().row(u as usize)));
    }
    p
}

pub fn evaluate_report<T: Scalar>(req: &EvalRequest<'_, T>) -> Result<MetricReport, EvalError> {
    let start = Instant::now();
    let split = req.split;
    let params = req.params;
    if req.batch_size == 0 {
        return Err(EvalError::ZeroBatch);
    }
    if params.num_users() != split.num_users() || params.num_items() != split.num_items() {
        return Err(EvalError::Dimension(format!(
            "embeddings are {}x{} but the split is {}x{}",
            params.num_users(),
            params.num_items(),
            split.num_users(),
            split.num_items()
        )));
    }
    let users = eval_users(split);
    if users.is_empty() {
        return Err(EvalError::EmptyEvaluation);
    }
    let k = req.ctx.max_k();
    let dim = params.dim();
    let mut partials = Vec::with_capacity(users.len().div_ceil(req.batch_size));
    let mut peak = 0;
    for chunk in users.chunks(req.batch_size) {
        let mut queries = Matrix::zeros(chunk.len(), dim);
        for (r, &u) in chunk.iter().enumerate() {
            queries.row_mut(r).copy_from_slice(params.user_emb.row(u as usize));
        }
        let masks = if req.mask_train {
            MaskSpec::new(chunk.iter().map(|&u| split.train().row(u as usize)).collect())
        } else {
            MaskSpec::none(chunk.len())
        };
        let result = search_exact(&params.item_emb, &queries, k, &masks, req.search)?;
        partials.push(partial_for_batch(chunk, &result.queries, split, req.ctx.k_list()));
        peak = peak.max(chunk.len());
    }
    let mut report = aggregate(&partials)?;
    report.wall_seconds = start.elapsed().as_secs_f64();
    report.peak_batch = (peak, params.num_items().min(req.search.item_block));
    Ok(report)
}

/// Evaluates final embeddings into a [`RunRecord`] for `req.ctx`.
pub fn evaluate<T: Scalar>(req: &EvalRequest<'_, T>) -> Result<RunRecord, EvalError> {
    Ok(evaluate_report(req)?.into_record(req.model_id.clone(), req.ctx))
}

/// Like [`evaluate`], but scores come from `score_fn`, which receives a block
/// of user ids and must return one row of `num_items` finite scores per user.
pub fn evaluate_with_scorer<T, F>(
    model_id: &str,
    mut score_fn: F,
    split: &Split,
    ctx: &EvalContext,
    batch_size: usize,
    mask_train: bool,
) -> Result<RunRecord, EvalError>
where
    T: Scalar,
    F: FnMut(&[u32]) -> Matrix<T>,
{
    let start = Instant::now();
    if batch_size == 0 {
        return Err(EvalError::ZeroBatch);
    }
    let users = eval_users(split);
    if users.is_empty() {
        return Err(EvalError::EmptyEvaluation);
    }
    let k = ctx.max_k();
    let mut partials = Vec::new();
    for chunk in users.chunks(batch_size) {
        let scores = score_fn(chunk);
        if scores.rows() != chunk.len() || scores.cols() != split.num_items() {
            return Err(EvalError::Contract(format!(
                "expected a {}x{} score block, got {}x{}",
                chunk.len(),
                split.num_items(),
                scores.rows(),
                scores.cols()
            )));
        }
        if !scores.is_finite() {
            return Err(EvalError::Contract("scores contain NaN or infinite values".into()));
        }
        let hits: Vec<QueryHits<T>> = chunk
            .iter()
            .enumerate()
            .map(|(r, &u)| {
                let mask = if mask_train { split.train().row(u as usize) } else { &[] };
                select_top_k(scores.row(r), mask, k)
            })
            .collect();
        partials.push(partial_for_batch(chunk, &hits, split, ctx.k_list()));
    }
    let mut report = aggregate(&partials)?;
    report.wall_seconds = start.elapsed().as_secs_f64();
    Ok(report.into_record(model_id, ctx))
}
