//! GRMF-X report tables built from the representative runs of a store.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use recbench::metrics::{format_percent, grmf_x};
use recbench::{EvalContext, Fingerprint, LossKind, MetricId, ModelKind};
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::manifest::RunManifest;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportColumn {
    pub model: String,
    pub model_kind: ModelKind,
    pub run_key: String,
    pub score: f64,
    pub grmf_x: f64,
    pub grmf_x_percent: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportTable {
    pub dataset: String,
    pub context: EvalContext,
    pub fingerprint: Fingerprint,
    pub metric: MetricId,
    pub k: usize,
    /// MF first, then the other models.
    pub columns: Vec<ReportColumn>,
}

#[derive(Debug, Clone, Default)]
pub struct Selection {
    pub dataset: String,
    pub loss: Option<LossKind>,
    pub fingerprint: Option<Fingerprint>,
}

impl Selection {
    fn admits(&self, m: &RunManifest) -> bool {
        m.representative
            && m.record.ctx.dataset_id() == self.dataset
            && self.loss.is_none_or(|l| m.record.ctx.loss_kind() == l)
            && self.fingerprint.is_none_or(|f| m.record.ctx_fingerprint == f)
    }
}

/// Among several representatives of one model, the best validated one wins;
/// ties go to the smallest run key.
fn pick<'a>(candidates: &[&'a RunManifest]) -> &'a RunManifest {
    let mut best = candidates[0];
    for &m in &candidates[1..] {
        let a = m.validation_ndcg().unwrap_or(f64::NEG_INFINITY);
        let b = best.validation_ndcg().unwrap_or(f64::NEG_INFINITY);
        if a > b || (a == b && m.run_key < best.run_key) {
            best = m;
        }
    }
    best
}

pub fn build_report(
    manifests: &[RunManifest],
    sel: &Selection,
    metric: MetricId,
    k: usize,
) -> CliResult<ReportTable> {
    let chosen: Vec<&RunManifest> = manifests.iter().filter(|m| sel.admits(m)).collect();
    if chosen.is_empty() {
        return Err(CliError::runtime(format!(
            "no representative runs for dataset `{}` in the store",
            sel.dataset
        )));
    }
    let fps: BTreeSet<Fingerprint> = chosen.iter().map(|m| m.record.ctx_fingerprint).collect();
    if fps.len() > 1 {
        let mut msg = String::from(
            "context violation: the selected runs come from different contexts; pick one with --fingerprint or --loss:",
        );
        for fp in &fps {
            let m = chosen.iter().find(|m| m.record.ctx_fingerprint == *fp).unwrap();
            write!(msg, "\n  {fp}  {}", m.record.ctx).unwrap();
        }
        return Err(CliError::Runtime(msg));
    }
    let ctx = chosen[0].record.ctx.clone();
    let fingerprint = chosen[0].record.ctx_fingerprint;

    let by_kind = |kind: ModelKind| -> Option<&RunManifest> {
        let c: Vec<&RunManifest> = chosen.iter().copied().filter(|m| m.model_kind == kind).collect();
        (!c.is_empty()).then(|| pick(&c))
    };
    let mf = by_kind(ModelKind::Mf).ok_or_else(|| {
        CliError::runtime(format!(
            "missing baseline: no representative MF run with fingerprint {fingerprint}; \
             gains are only defined against MF trained under the same context ({ctx})"
        ))
    })?;
    let mut columns = Vec::new();
    for kind in ModelKind::ALL {
        let Some(m) = by_kind(kind) else { continue };
        let g = grmf_x(&m.record, &mf.record, metric, k)?;
        columns.push(ReportColumn {
            model: kind.label().to_string(),
            model_kind: kind,
            run_key: m.run_key.clone(),
            score: m.record.score(metric, k).expect("checked by grmf_x"),
            grmf_x: g,
            grmf_x_percent: format_percent(g),
        });
    }
    Ok(ReportTable {
        dataset: sel.dataset.clone(),
        context: ctx,
        fingerprint,
        metric,
        k,
        columns,
    })
}

impl ReportTable {
    pub fn to_markdown(&self) -> String {
        let c = &self.context;
        let mut s = String::new();
        writeln!(s, "### {}", self.dataset).unwrap();
        writeln!(s).unwrap();
        writeln!(
            s,
            "Context: loss={}, negatives={}, dim={}, sampler={}, K={} (fingerprint {})",
            c.loss_kind(),
            c.num_negatives(),
            c.embedding_dim(),
            c.sampler_kind(),
            c.k_list().iter().map(usize::to_string).collect::<Vec<_>>().join(","),
            self.fingerprint
        )
        .unwrap();
        writeln!(s).unwrap();
        let head: Vec<&str> = self.columns.iter().map(|c| c.model.as_str()).collect();
        writeln!(s, "| Metric | {} |", head.join(" | ")).unwrap();
        writeln!(s, "|---|{}", "---:|".repeat(head.len())).unwrap();
        let label = format!("{}@{}", self.metric.label(), self.k);
        let scores: Vec<String> = self.columns.iter().map(|c| format!("{:.4}", c.score)).collect();
        writeln!(s, "| {label} | {} |", scores.join(" | ")).unwrap();
        let gains: Vec<&str> = self.columns.iter().map(|c| c.grmf_x_percent.as_str()).collect();
        writeln!(s, "| GRMF-{label} (%) | {} |", gains.join(" | ")).unwrap();
        s
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}
