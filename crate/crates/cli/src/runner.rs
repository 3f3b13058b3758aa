//! Training a single run end to end: holdout, epochs with optional early
//! stopping, final evaluation and artifacts.

use std::fmt::Write as _;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use recbench::data::{build_split, holdout};
use recbench::eval::{evaluate, EvalRequest};
use recbench::model::{save_checkpoint, TrainData, Trainer};
use recbench::{EvalContext, InteractionStore, LossKind, MetricId, ModelKind, ModelParams, Scalar, Split};

use crate::error::{CliError, CliResult};
use crate::manifest::{hyper_point, Precision, RunManifest, RunSpec, RunStore, Validation, TOOLKIT_VERSION};

/// Rejects model/context pairs the trainer cannot run.
pub fn check_combo(kind: ModelKind, ctx: &EvalContext) -> CliResult<()> {
    if kind == ModelKind::UltraGcn && ctx.loss_kind() != LossKind::Bce {
        return Err(CliError::usage(
            "ultragcn weights the positive terms of a BCE loss; use --loss bce",
        ));
    }
    Ok(())
}

/// Training positives the model is fitted on, after removing the validation
/// holdout when the `RunSpec` asks for one.
pub fn fit_and_validation(split: &Split, spec: &RunSpec) -> CliResult<(InteractionStore, Option<Split>)> {
    if !spec.validates() {
        return Ok((split.train().clone(), None));
    }
    let (fit, held) = holdout(split.train(), spec.holdout_fraction, spec.holdout_seed)?;
    let valid = build_split(fit.clone(), held)?;
    Ok((fit, Some(valid)))
}

pub fn execute(spec: &RunSpec, split: &Split, store: &RunStore, eval_batch: usize) -> CliResult<RunManifest> {
    check_combo(spec.model_kind, &spec.ctx)?;
    match spec.precision {
        Precision::F32 => execute_typed::<f32>(spec, split, store, eval_batch),
        Precision::F64 => execute_typed::<f64>(spec, split, store, eval_batch),
    }
}

fn validation_ndcg<T: Scalar>(
    data: &TrainData<'_, T>,
    params: &ModelParams<T>,
    spec: &RunSpec,
    valid: &Split,
    eval_batch: usize,
) -> CliResult<f64> {
    let emb = data.final_embeddings(params, &spec.train_config)?;
    let k = spec.ctx.max_k();
    let rec = evaluate(&EvalRequest::new("validation", &emb, valid, &spec.ctx).with_batch_size(eval_batch))?;
    Ok(rec.score(MetricId::Ndcg, k).expect("ndcg at max k is always computed"))
}

fn execute_typed<T: Scalar>(
    spec: &RunSpec,
    split: &Split,
    store: &RunStore,
    eval_batch: usize,
) -> CliResult<RunManifest> {
    let start = Instant::now();
    let key = spec.run_key();
    let cfg = &spec.train_config;
    let (fit, valid) = fit_and_validation(split, spec)?;
    let mut trainer = Trainer::<T>::new(spec.model_kind, &fit, spec.ctx.clone(), cfg.clone())?;
    let data = TrainData::<T>::new(spec.model_kind, &fit);

    let mut trace = String::from("epoch,mean_loss,wall_seconds,validation_ndcg\n");
    let mut best: Option<(f64, usize, ModelParams<T>)> = None;
    let mut stale = 0;
    let mut epochs_run = 0;
    for epoch in 1..=cfg.epochs {
        let st = trainer.run_epoch()?;
        epochs_run = epoch;
        let check = valid.as_ref().filter(|_| spec.patience.is_some() || epoch == cfg.epochs);
        let val = match check {
            Some(v) => Some(validation_ndcg(&data, trainer.params(), spec, v, eval_batch)?),
            None => None,
        };
        let loss = st.mean_loss.map(|l| format!("{l:.10}")).unwrap_or_default();
        let vs = val.map(|v| format!("{v:.10}")).unwrap_or_default();
        writeln!(trace, "{epoch},{loss},{:.3},{vs}", start.elapsed().as_secs_f64()).unwrap();
        log::info!("{} epoch {epoch}: loss {loss} validation {vs}", spec.model_kind);
        if let Some(v) = val {
            if best.as_ref().is_none_or(|(b, _, _)| v > *b) {
                best = Some((v, epoch, trainer.params().clone()));
                stale = 0;
            } else {
                stale += 1;
            }
        }
        if spec.patience.is_some_and(|p| stale >= p) {
            log::info!("early stop after epoch {epoch}");
            break;
        }
    }
    if cfg.epochs == 0 {
        if let Some(v) = &valid {
            let n = validation_ndcg(&data, trainer.params(), spec, v, eval_batch)?;
            best = Some((n, 0, trainer.params().clone()));
        }
    }

    let (validation, params) = match best {
        Some((ndcg, best_epoch, p)) => (
            Some(Validation {
                holdout_fraction: spec.holdout_fraction,
                holdout_seed: spec.holdout_seed,
                ndcg,
                best_epoch,
            }),
            p,
        ),
        None => (None, trainer.into_params()),
    };
    if !params.is_finite() {
        return Err(CliError::runtime("training diverged: parameters are not finite"));
    }
    let emb = data.final_embeddings(&params, cfg)?;
    let req = EvalRequest::new(spec.model_kind.label(), &emb, split, &spec.ctx).with_batch_size(eval_batch);
    let mut record = evaluate(&req)?;
    record.hyper_point = hyper_point(spec.model_kind, cfg);
    record.wall_seconds = start.elapsed().as_secs_f64();

    let ckpt = store.artifact_rel(&key, "ckpt");
    save_checkpoint(&params, &store.resolve(&ckpt))?;
    let trace_rel = store.artifact_rel(&key, "loss.csv");
    crate::manifest::write_atomic(&store.resolve(&trace_rel), trace.as_bytes())?;

    Ok(RunManifest {
        run_key: key,
        record,
        model_kind: spec.model_kind,
        train_config: cfg.clone(),
        precision: spec.precision,
        toolkit_version: TOOLKIT_VERSION.to_string(),
        timestamp: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        seed: cfg.seed,
        epochs_run,
        patience: spec.patience,
        validation,
        loss_trace: Some(trace_rel),
        checkpoint: Some(ckpt),
        representative: false,
    })
}
