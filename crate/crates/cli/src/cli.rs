use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use recbench::data::stats;
use recbench::eval::{evaluate, EvalRequest, DEFAULT_EVAL_BATCH};
use recbench::model::{load_checkpoint, TrainData};
use recbench::{EvalContext, Fingerprint, LossKind, MetricId, ModelKind, SamplerKind, Scalar, TrainConfig};

use crate::datasets::{thousands, DataSource, DatasetRef};
use crate::error::{CliError, CliResult};
use crate::manifest::{load_manifest, Precision, RunSpec, RunStore};
use crate::plan::{BenchPlan, DEFAULT_HOLDOUT};
use crate::report::{build_report, Selection};
use crate::runner::{check_combo, execute, fit_and_validation};

#[derive(Debug, Parser)]
#[command(name = "recbench", version, about = "Benchmark implicit-feedback recommenders under a fixed evaluation context")]
pub struct Cli {
    #[command(flatten)]
    pub source: SourceArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct SourceArgs {
    /// Dataset cache directory [default: $RECBENCH_CACHE or ~/.cache/recbench]
    #[arg(long, global = true)]
    pub cache: Option<PathBuf>,
    /// Base URL (or local directory) holding <name>/train.txt and <name>/test.txt
    #[arg(long, global = true)]
    pub base_url: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Download and cache a dataset, or print its statistics
    Dataset {
        action: DatasetAction,
        /// yelp2018, gowalla, synthetic or synthetic:<users>x<items>:rank<r>:seed<s>
        name: String,
    },
    /// Train one model, evaluate it and store its manifest
    Train(TrainArgs),
    /// Re-evaluate a stored run from its checkpoint
    Eval(EvalArgs),
    /// Run every grid point of a plan into a run store
    Bench(BenchArgs),
    /// Print the GRMF-X table of a run store
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DatasetAction {
    Fetch,
    Stats,
}

fn parse_loss(s: &str) -> Result<LossKind, String> {
    s.parse().map_err(|e: recbench::context::ContextError| e.to_string())
}

fn parse_sampler(s: &str) -> Result<SamplerKind, String> {
    s.parse().map_err(|e: recbench::context::ContextError| e.to_string())
}

fn parse_model(s: &str) -> Result<ModelKind, String> {
    s.parse().map_err(|e: recbench::model::ModelError| e.to_string())
}

fn parse_metric(s: &str) -> Result<MetricId, String> {
    s.parse().map_err(|e: recbench::metrics::MetricsError| e.to_string())
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub dataset: String,
    /// mf, ultragcn or lightgcn
    #[arg(long, value_parser = parse_model)]
    pub model: ModelKind,
    /// bpr or bce
    #[arg(long, value_parser = parse_loss)]
    pub loss: LossKind,
    #[arg(long, default_value_t = 64)]
    pub dim: usize,
    #[arg(long, default_value_t = 1)]
    pub negatives: usize,
    #[arg(long, default_value = "uniform_reject", value_parser = parse_sampler)]
    pub sampler: SamplerKind,
    /// Cutoffs, comma separated
    #[arg(long, value_delimiter = ',', default_value = "20")]
    pub k: Vec<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub l2: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Propagation depth (lightgcn only)
    #[arg(long)]
    pub layers: Option<usize>,
    /// Positive-weight strength (ultragcn only)
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Stop after this many epochs without a validation improvement
    #[arg(long)]
    pub patience: Option<usize>,
    /// Fraction of training positives held out for validation [default: 0.05 with --patience, else 0]
    #[arg(long)]
    pub holdout: Option<f64>,
    /// [default: --seed]
    #[arg(long)]
    pub holdout_seed: Option<u64>,
    #[arg(long, default_value = "f32")]
    pub precision: Precision,
    #[arg(long, default_value_t = DEFAULT_EVAL_BATCH)]
    pub eval_batch: usize,
    /// Run store directory
    #[arg(long, default_value = "runs")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value_t = DEFAULT_EVAL_BATCH)]
    pub batch_size: usize,
    /// Keep training positives in the ranking (sensitivity check only)
    #[arg(long)]
    pub no_mask: bool,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub plan: PathBuf,
    #[arg(long)]
    pub store: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub store: PathBuf,
    #[arg(long)]
    pub dataset: String,
    #[arg(long, default_value = "ndcg", value_parser = parse_metric)]
    pub metric: MetricId,
    #[arg(long, default_value_t = 20)]
    pub k: usize,
    /// Only runs trained with this loss
    #[arg(long, value_parser = parse_loss)]
    pub loss: Option<LossKind>,
    /// Only runs with this context fingerprint
    #[arg(long)]
    pub fingerprint: Option<Fingerprint>,
    /// Also write the table as JSON
    #[arg(long)]
    pub json: Option<PathBuf>,
    /// Write Markdown here instead of stdout
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(cli: Cli, out: &mut dyn Write) -> CliResult<()> {
    let src = DataSource {
        cache_root: cli.source.cache,
        base_url: cli.source.base_url,
    };
    match cli.command {
        Command::Dataset { action, name } => cmd_dataset(&src, action, &name, out),
        Command::Train(a) => cmd_train(&src, a, out),
        Command::Eval(a) => cmd_eval(&src, a, out),
        Command::Bench(a) => cmd_bench(&src, a, out),
        Command::Report(a) => cmd_report(a, out),
    }
}

fn cmd_dataset(src: &DataSource, action: DatasetAction, name: &str, out: &mut dyn Write) -> CliResult<()> {
    let ds = DatasetRef::parse(name)?;
    match action {
        DatasetAction::Fetch => {
            match ds.prepare(src)? {
                None => writeln!(out, "{}: generated on demand, nothing to fetch", ds.id())?,
                Some(p) if p.cache_hit => {
                    writeln!(out, "{}: cached at {}", ds.id(), p.cache_path.display())?
                }
                Some(p) => writeln!(out, "{}: prepared {}", ds.id(), p.cache_path.display())?,
            }
            Ok(())
        }
        DatasetAction::Stats => {
            let split = ds.load(src)?;
            let st = stats(&split)?;
            writeln!(out, "| Dataset | Users | Items | Interactions | Density |")?;
            writeln!(out, "|---|---:|---:|---:|---:|")?;
            writeln!(
                out,
                "| {} | {} | {} | {} | {} |",
                ds.id(),
                thousands(st.users),
                thousands(st.items),
                thousands(st.interactions),
                st.density_display()
            )?;
            writeln!(out)?;
            writeln!(
                out,
                "train: {} interactions (density {:.5}), test: {}",
                thousands(st.train_interactions),
                st.train_density(),
                thousands(st.test_interactions)
            )?;
            Ok(())
        }
    }
}

fn cmd_train(src: &DataSource, a: TrainArgs, out: &mut dyn Write) -> CliResult<()> {
    if a.layers.is_some() && a.model != ModelKind::LightGcn {
        return Err(CliError::usage(format!("--layers only applies to lightgcn, not {}", a.model)));
    }
    if a.gamma.is_some() && a.model != ModelKind::UltraGcn {
        return Err(CliError::usage(format!("--gamma only applies to ultragcn, not {}", a.model)));
    }
    let holdout = a.holdout.unwrap_or(if a.patience.is_some() { DEFAULT_HOLDOUT } else { 0.0 });
    if !(0.0..1.0).contains(&holdout) {
        return Err(CliError::usage(format!("--holdout must lie in [0, 1), got {holdout}")));
    }
    if a.patience.is_some() && holdout == 0.0 {
        return Err(CliError::usage("--patience needs a validation holdout (--holdout > 0)"));
    }
    if a.eval_batch == 0 {
        return Err(CliError::usage("--eval-batch must be positive"));
    }
    let ds = DatasetRef::parse(&a.dataset)?;
    let ctx = EvalContext::new(ds.id(), a.loss, a.negatives, a.dim, a.sampler, a.k.clone())
        .map_err(|e| CliError::usage(e.to_string()))?;
    check_combo(a.model, &ctx)?;
    let d = TrainConfig::default();
    let cfg = TrainConfig {
        learning_rate: a.lr.unwrap_or(d.learning_rate),
        l2_coefficient: a.l2.unwrap_or(d.l2_coefficient),
        batch_size: a.batch_size.unwrap_or(d.batch_size),
        epochs: a.epochs.unwrap_or(d.epochs),
        seed: a.seed,
        lightgcn_layers: a.layers.unwrap_or(d.lightgcn_layers),
        ultragcn_gamma: a.gamma.unwrap_or(d.ultragcn_gamma),
    };
    cfg.validate().map_err(|e| CliError::usage(e.to_string()))?;
    let spec = RunSpec {
        model_kind: a.model,
        ctx,
        train_config: cfg,
        precision: a.precision,
        holdout_fraction: holdout,
        holdout_seed: a.holdout_seed.unwrap_or(a.seed),
        patience: a.patience,
    };
    let split = ds.load(src)?;
    let store = RunStore::open(&a.out)?;
    let mut m = execute(&spec, &split, &store, a.eval_batch)?;
    m.representative = true;
    let path = store.save(&m)?;
    for s in &m.record.metrics {
        writeln!(out, "{}@{}\t{:.6}", s.metric.label(), s.k, s.value)?;
    }
    writeln!(out, "manifest\t{}", path.display())?;
    Ok(())
}

fn cmd_eval(src: &DataSource, a: EvalArgs, out: &mut dyn Write) -> CliResult<()> {
    if a.batch_size == 0 {
        return Err(CliError::usage("--batch-size must be positive"));
    }
    let m = load_manifest(&a.manifest)?;
    let base = a.manifest.parent().unwrap_or(std::path::Path::new("."));
    let ckpt = m
        .checkpoint
        .as_ref()
        .ok_or_else(|| CliError::runtime("manifest has no checkpoint"))?;
    let ds = DatasetRef::parse(m.record.ctx.dataset_id())?;
    let split = ds.load(src)?;
    let spec = m.spec();
    let record = match m.precision {
        Precision::F32 => reevaluate::<f32>(&spec, &split, &base.join(ckpt), &a)?,
        Precision::F64 => reevaluate::<f64>(&spec, &split, &base.join(ckpt), &a)?,
    };
    let mut json = serde_json::to_string_pretty(&record)?;
    json.push('\n');
    out.write_all(json.as_bytes())?;
    Ok(())
}

fn reevaluate<T: Scalar>(
    spec: &RunSpec,
    split: &recbench::Split,
    ckpt: &std::path::Path,
    a: &EvalArgs,
) -> CliResult<recbench::RunRecord> {
    let params = load_checkpoint::<T>(ckpt)?;
    // graph models propagate over the positives they were fitted on
    let (fit, _) = fit_and_validation(split, spec)?;
    let emb = TrainData::<T>::new(spec.model_kind, &fit).final_embeddings(&params, &spec.train_config)?;
    let mut req = EvalRequest::new(spec.model_kind.label(), &emb, split, &spec.ctx).with_batch_size(a.batch_size);
    req.mask_train = !a.no_mask;
    let mut rec = evaluate(&req)?;
    rec.hyper_point = crate::manifest::hyper_point(spec.model_kind, &spec.train_config);
    Ok(rec)
}

fn cmd_bench(src: &DataSource, a: BenchArgs, out: &mut dyn Write) -> CliResult<()> {
    let text = fs::read_to_string(&a.plan)
        .map_err(|e| CliError::usage(format!("cannot read plan {}: {e}", a.plan.display())))?;
    let plan = BenchPlan::parse(&text)?;
    let store = RunStore::open(&a.store)?;
    let points = plan.points()?;
    let split = plan.dataset.load(src)?;
    let mut keys = Vec::with_capacity(points.len());
    for spec in &points {
        let key = spec.run_key();
        if store.contains(&key) {
            writeln!(out, "skip\t{key}\t{}\t(already in store)", spec.model_kind)?;
        } else {
            let m = execute(spec, &split, &store, plan.eval_batch_size)?;
            store.save(&m)?;
            writeln!(
                out,
                "done\t{key}\t{}\tvalidation NDCG@{} {:.6}",
                spec.model_kind,
                spec.ctx.max_k(),
                m.validation_ndcg().unwrap_or(f64::NAN)
            )?;
        }
        keys.push((spec.model_kind, key));
    }
    // best validation point per model becomes its representative
    for kind in ModelKind::ALL {
        let mut runs: Vec<_> = keys
            .iter()
            .filter(|(k, _)| *k == kind)
            .map(|(_, key)| store.load(key))
            .collect::<CliResult<_>>()?;
        if runs.is_empty() {
            continue;
        }
        let best = runs
            .iter()
            .enumerate()
            .max_by(|(_, x), (_, y)| {
                let vx = x.validation_ndcg().unwrap_or(f64::NEG_INFINITY);
                let vy = y.validation_ndcg().unwrap_or(f64::NEG_INFINITY);
                vx.total_cmp(&vy).then_with(|| y.run_key.cmp(&x.run_key))
            })
            .map(|(i, _)| i)
            .unwrap();
        for (i, r) in runs.iter_mut().enumerate() {
            let flag = i == best;
            if r.representative != flag {
                r.representative = flag;
                store.save(r)?;
            }
        }
        writeln!(out, "representative\t{}\t{}", kind, runs[best].run_key)?;
    }
    Ok(())
}

fn cmd_report(a: ReportArgs, out: &mut dyn Write) -> CliResult<()> {
    let store = RunStore::existing(&a.store)?;
    let manifests = store.list()?;
    let sel = Selection {
        dataset: a.dataset,
        loss: a.loss,
        fingerprint: a.fingerprint,
    };
    let table = build_report(&manifests, &sel, a.metric, a.k)?;
    let md = table.to_markdown();
    match &a.out {
        Some(p) => crate::manifest::write_atomic(p, md.as_bytes())?,
        None => out.write_all(md.as_bytes())?,
    }
    if let Some(p) = &a.json {
        crate::manifest::write_atomic(p, table.to_json().as_bytes())?;
    }
    Ok(())
}
