//! Benchmark plans: one dataset, one evaluation context, and a
//! hyper-parameter grid per model.
//!
//! ```toml
//! dataset = "synthetic:200x300:rank8:seed1"
//!
//! [context]
//! loss = "bpr"
//! negatives = 1
//! dim = 64
//! sampler = "uniform_reject"
//! k = [20]
//!
//! [train]
//! epochs = 30
//! learning_rate = 0.005
//!
//! [models.mf]
//! l2_coefficient = [1e-5, 1e-4, 1e-3, 1e-2]
//!
//! [models.lightgcn]
//! lightgcn_layers = 3
//! ```
//!
//! A list value is a grid axis; the grid is the cartesian product of all
//! axes of a model section. Context keys are only accepted in `[context]`,
//! so a plan cannot describe runs from two different contexts.

use std::collections::BTreeMap;

use recbench::{EvalContext, LossKind, ModelKind, SamplerKind, TrainConfig};
use toml::{Table, Value};

use crate::datasets::DatasetRef;
use crate::error::{CliError, CliResult};
use crate::manifest::{Precision, RunSpec};
use crate::runner::check_combo;

pub const CONTEXT_KEYS: &[&str] = &[
    "dataset",
    "dataset_id",
    "loss",
    "loss_kind",
    "negatives",
    "num_negatives",
    "dim",
    "embedding_dim",
    "sampler",
    "sampler_kind",
    "k",
    "k_list",
];

const TRAIN_KEYS: &[&str] = &[
    "learning_rate",
    "l2_coefficient",
    "batch_size",
    "epochs",
    "seed",
    "lightgcn_layers",
    "ultragcn_gamma",
];

const RUN_KEYS: &[&str] = &["precision", "holdout_fraction", "holdout_seed", "patience", "eval_batch_size"];

pub const DEFAULT_HOLDOUT: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrid {
    pub kind: ModelKind,
    /// Axis name and its values, in key order.
    pub axes: Vec<(String, Vec<Value>)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchPlan {
    pub dataset: DatasetRef,
    pub ctx: EvalContext,
    pub base: TrainConfig,
    pub precision: Precision,
    pub holdout_fraction: f64,
    pub holdout_seed: u64,
    pub patience: Option<usize>,
    pub eval_batch_size: usize,
    pub models: Vec<ModelGrid>,
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::usage(format!("plan: {}", msg.into()))
}

fn as_f64(key: &str, v: &Value) -> CliResult<f64> {
    match v {
        Value::Float(f) => Ok(*f),
        Value::Integer(i) => Ok(*i as f64),
        _ => Err(usage(format!("`{key}` must be a number, got {v}"))),
    }
}

fn as_usize(key: &str, v: &Value) -> CliResult<usize> {
    match v {
        Value::Integer(i) if *i >= 0 => Ok(*i as usize),
        _ => Err(usage(format!("`{key}` must be a non-negative integer, got {v}"))),
    }
}

fn as_str<'a>(key: &str, v: &'a Value) -> CliResult<&'a str> {
    v.as_str().ok_or_else(|| usage(format!("`{key}` must be a string, got {v}")))
}

fn set_train_key(cfg: &mut TrainConfig, key: &str, v: &Value) -> CliResult<()> {
    match key {
        "learning_rate" => cfg.learning_rate = as_f64(key, v)?,
        "l2_coefficient" => cfg.l2_coefficient = as_f64(key, v)?,
        "batch_size" => cfg.batch_size = as_usize(key, v)?,
        "epochs" => cfg.epochs = as_usize(key, v)?,
        "seed" => cfg.seed = as_usize(key, v)? as u64,
        "lightgcn_layers" => cfg.lightgcn_layers = as_usize(key, v)?,
        "ultragcn_gamma" => cfg.ultragcn_gamma = as_f64(key, v)?,
        _ => return Err(usage(format!("unknown training key `{key}`"))),
    }
    Ok(())
}

fn table<'a>(v: &'a Value, name: &str) -> CliResult<&'a Table> {
    v.as_table().ok_or_else(|| usage(format!("`{name}` must be a section")))
}

fn parse_context(dataset_id: String, t: &Table) -> CliResult<EvalContext> {
    let mut loss = None;
    let mut negatives = 1;
    let mut dim = 64;
    let mut sampler = SamplerKind::UniformReject;
    let mut k = vec![20];
    for (key, v) in t {
        match key.as_str() {
            "loss" | "loss_kind" => {
                loss = Some(as_str(key, v)?.parse::<LossKind>().map_err(|e| usage(e.to_string()))?)
            }
            "negatives" | "num_negatives" => negatives = as_usize(key, v)?,
            "dim" | "embedding_dim" => dim = as_usize(key, v)?,
            "sampler" | "sampler_kind" => {
                sampler = as_str(key, v)?.parse().map_err(|e: recbench::context::ContextError| usage(e.to_string()))?
            }
            "k" | "k_list" => {
                k = match v {
                    Value::Array(a) => a.iter().map(|x| as_usize(key, x)).collect::<CliResult<_>>()?,
                    other => vec![as_usize(key, other)?],
                }
            }
            _ => return Err(usage(format!("unknown context key `{key}`"))),
        }
    }
    let loss = loss.ok_or_else(|| usage("[context] needs `loss`"))?;
    EvalContext::new(dataset_id, loss, negatives, dim, sampler, k).map_err(|e| usage(e.to_string()))
}

impl BenchPlan {
    pub fn parse(text: &str) -> CliResult<Self> {
        let doc: Table = toml::from_str(text).map_err(|e| usage(e.to_string()))?;
        let mut dataset = None;
        let mut ctx_table = None;
        let mut train_table = None;
        let mut models_table = None;
        for (key, v) in &doc {
            match key.as_str() {
                "dataset" => dataset = Some(DatasetRef::parse(as_str(key, v)?)?),
                "context" => ctx_table = Some(table(v, key)?),
                "train" => train_table = Some(table(v, key)?),
                "models" => models_table = Some(table(v, key)?),
                k if CONTEXT_KEYS.contains(&k) => {
                    return Err(usage(format!("context key `{k}` belongs in [context]")))
                }
                _ => return Err(usage(format!("unknown top-level key `{key}`"))),
            }
        }
        let dataset = dataset.ok_or_else(|| usage("missing `dataset`"))?;
        let ctx = parse_context(
            dataset.id(),
            ctx_table.ok_or_else(|| usage("missing [context] section"))?,
        )?;

        let mut base = TrainConfig::default();
        let mut precision = Precision::F32;
        let mut holdout_fraction = DEFAULT_HOLDOUT;
        let mut holdout_seed = None;
        let mut patience = None;
        let mut eval_batch_size = recbench::eval::DEFAULT_EVAL_BATCH;
        for (key, v) in train_table.into_iter().flatten() {
            match key.as_str() {
                "precision" => precision = as_str(key, v)?.parse().map_err(usage)?,
                "holdout_fraction" => holdout_fraction = as_f64(key, v)?,
                "holdout_seed" => holdout_seed = Some(as_usize(key, v)? as u64),
                "patience" => patience = Some(as_usize(key, v)?),
                "eval_batch_size" => eval_batch_size = as_usize(key, v)?,
                k if CONTEXT_KEYS.contains(&k) => {
                    return Err(usage(format!("context key `{k}` belongs in [context], not [train]")))
                }
                _ => set_train_key(&mut base, key, v)?,
            }
        }
        if !(holdout_fraction > 0.0 && holdout_fraction < 1.0) {
            return Err(usage(format!(
                "holdout_fraction must lie in (0, 1) so runs can be ranked on validation data, got {holdout_fraction}"
            )));
        }
        if eval_batch_size == 0 {
            return Err(usage("eval_batch_size must be positive"));
        }

        let models_table = models_table.ok_or_else(|| usage("no [models.<name>] sections"))?;
        let mut models = Vec::new();
        for (name, section) in models_table {
            let kind: ModelKind = name.parse().map_err(|_| usage(format!("unknown model `{name}`")))?;
            check_combo(kind, &ctx)?;
            let mut axes = Vec::new();
            for (key, v) in table(section, name)? {
                if CONTEXT_KEYS.contains(&key.as_str()) {
                    return Err(usage(format!(
                        "context key `{key}` in [models.{name}]: a plan has exactly one context, set it in [context]"
                    )));
                }
                if RUN_KEYS.contains(&key.as_str()) {
                    return Err(usage(format!("`{key}` applies to the whole plan; set it in [train]")));
                }
                if !TRAIN_KEYS.contains(&key.as_str()) {
                    return Err(usage(format!("unknown key `{key}` in [models.{name}]")));
                }
                let only = match key.as_str() {
                    "lightgcn_layers" => Some(ModelKind::LightGcn),
                    "ultragcn_gamma" => Some(ModelKind::UltraGcn),
                    _ => None,
                };
                if only.is_some_and(|m| m != kind) {
                    return Err(usage(format!("`{key}` does not apply to model `{name}`")));
                }
                let values = match v {
                    Value::Array(a) if a.is_empty() => {
                        return Err(usage(format!("grid axis `{key}` in [models.{name}] is empty")))
                    }
                    Value::Array(a) => a.clone(),
                    other => vec![other.clone()],
                };
                for x in &values {
                    set_train_key(&mut base.clone(), key, x)?;
                }
                axes.push((key.clone(), values));
            }
            models.push(ModelGrid { kind, axes });
        }
        if models.is_empty() {
            return Err(usage("no [models.<name>] sections"));
        }
        let seed = holdout_seed.unwrap_or(base.seed);
        let plan = BenchPlan {
            dataset,
            ctx,
            base,
            precision,
            holdout_fraction,
            holdout_seed: seed,
            patience,
            eval_batch_size,
            models,
        };
        for spec in plan.points()? {
            spec.train_config.validate().map_err(|e| usage(e.to_string()))?;
        }
        Ok(plan)
    }

    /// Every grid point of every model, model by model.
    pub fn points(&self) -> CliResult<Vec<RunSpec>> {
        let mut out = Vec::new();
        for m in &self.models {
            for point in cartesian(&m.axes) {
                let mut cfg = self.base.clone();
                for (key, v) in &point {
                    set_train_key(&mut cfg, key, v)?;
                }
                out.push(RunSpec {
                    model_kind: m.kind,
                    ctx: self.ctx.clone(),
                    train_config: cfg,
                    precision: self.precision,
                    holdout_fraction: self.holdout_fraction,
                    holdout_seed: self.holdout_seed,
                    patience: self.patience,
                });
            }
        }
        Ok(out)
    }
}

fn cartesian(axes: &[(String, Vec<Value>)]) -> Vec<BTreeMap<String, Value>> {
    let mut acc = vec![BTreeMap::new()];
    for (key, values) in axes {
        acc = acc
            .into_iter()
            .flat_map(|p| {
                values.iter().map(move |v| {
                    let mut q = p.clone();
                    q.insert(key.clone(), v.clone());
                    q
                })
            })
            .collect();
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    const PLAN: &str = r#"
dataset = "synthetic:20x30:rank2:seed1"

[context]
loss = "bpr"
dim = 8
k = [5, 10]

[train]
epochs = 2

[models.mf]
l2_coefficient = [1e-5, 1e-4, 1e-3, 1e-2]
learning_rate = 0.01

[models.lightgcn]
lightgcn_layers = [1, 2]
"#;

    #[test]
    fn grid_expands() {
        let plan = BenchPlan::parse(PLAN).unwrap();
        assert_eq!(plan.ctx.embedding_dim(), 8);
        assert_eq!(plan.ctx.k_list(), &[5, 10]);
        let pts = plan.points().unwrap();
        assert_eq!(pts.len(), 6);
        let mf: Vec<f64> = pts
            .iter()
            .filter(|p| p.model_kind == ModelKind::Mf)
            .map(|p| p.train_config.l2_coefficient)
            .collect();
        assert_eq!(mf, vec![1e-5, 1e-4, 1e-3, 1e-2]);
        assert!(pts.iter().all(|p| p.ctx == plan.ctx && p.train_config.epochs == 2));
        let keys: std::collections::BTreeSet<String> = pts.iter().map(|p| p.run_key()).collect();
        assert_eq!(keys.len(), 6);
    }

    #[test]
    fn context_keys_in_model_sections_are_rejected() {
        for bad in ["loss = \"bce\"", "dim = 32", "k = [10]", "negatives = 4"] {
            let text = PLAN.replace("learning_rate = 0.01", bad);
            let err = BenchPlan::parse(&text).unwrap_err();
            assert_eq!(err.exit_code(), 2, "{bad}");
            assert!(err.to_string().contains("one context"), "{err}");
        }
    }

    #[test]
    fn other_plan_errors() {
        let cases = [
            PLAN.replace("lightgcn_layers = [1, 2]", "ultragcn_gamma = 2.0"),
            PLAN.replace("[models.lightgcn]", "[models.gru4rec]"),
            PLAN.replace("loss = \"bpr\"", ""),
            PLAN.replace("[1, 2]", "[]"),
            PLAN.replace("epochs = 2", "epochs = -1"),
            PLAN.replace("lightgcn]", "ultragcn]").replace("lightgcn_layers = [1, 2]", ""),
            format!("loss = \"bce\"\n{PLAN}"),
        ];
        for text in cases {
            assert_eq!(BenchPlan::parse(&text).unwrap_err().exit_code(), 2, "{text}");
        }
    }
}
