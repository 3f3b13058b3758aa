use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::graph::{normalize_adjacency, propagate_lightgcn, propagate_stacked};
use super::loss::{l2_penalty, loss_bce, loss_bpr, loss_ultragcn, ultragcn_weight};
use super::optim::{adam_step, AdamState, Gradients};
use super::params::{init_params, ModelParams};
use super::sampling::sample_negatives;
use super::{ModelError, ModelKind, NormalizedBipartiteGraph};
use crate::context::{EvalContext, LossKind};
use crate::data::InteractionStore;
use crate::scalar::{axpy, dot, Scalar};

/// Tunables outside the evaluation context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub l2_coefficient: f64,
    /// Positive pairs per mini-batch.
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub lightgcn_layers: usize,
    pub ultragcn_gamma: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            l2_coefficient: 1e-4,
            batch_size: 8192,
            epochs: 100,
            seed: 0,
            lightgcn_layers: 3,
            ultragcn_gamma: 1.0,
        }
    }
}

impl TrainConfig {
    /// L2 values searched when tuning a model.
    pub const L2_GRID: [f64; 4] = [1e-5, 1e-4, 1e-3, 1e-2];

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::InvalidConfig(m));
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(self.l2_coefficient.is_finite() && self.l2_coefficient >= 0.0) {
            return bad(format!("l2_coefficient must be >= 0, got {}", self.l2_coefficient));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if !(self.ultragcn_gamma.is_finite() && self.ultragcn_gamma >= 0.0) {
            return bad(format!("ultragcn_gamma must be >= 0, got {}", self.ultragcn_gamma));
        }
        Ok(())
    }
}

/// One training positive and its sampled negatives.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Example {
    pub user: u32,
    pub pos: u32,
    pub negs: Vec<u32>,
}

/// Per-run precomputation: the positive pair list, degrees and, for
/// LightGCN, the normalized graph.
#[derive(Debug, Clone)]
pub struct TrainData<'a, T> {
    kind: ModelKind,
    train: &'a InteractionStore,
    pairs: Vec<(u32, u32)>,
    item_degrees: Vec<usize>,
    graph: Option<NormalizedBipartiteGraph<T>>,
}

impl<'a, T: Scalar> TrainData<'a, T> {
    pub fn new(kind: ModelKind, train: &'a InteractionStore) -> Self {
        Self {
            kind,
            train,
            pairs: train.pairs().collect(),
            item_degrees: train.item_degrees(),
            graph: (kind == ModelKind::LightGcn).then(|| normalize_adjacency(train)),
        }
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn train(&self) -> &InteractionStore {
        self.train
    }

    pub fn num_pairs(&self) -> usize {
        self.pairs.len()
    }

    pub fn graph(&self) -> Option<&NormalizedBipartiteGraph<T>> {
        self.graph.as_ref()
    }

    /// Embeddings used for scoring: propagated for LightGCN, the parameters
    /// themselves otherwise.
    pub fn final_embeddings(
        &self,
        params: &ModelParams<T>,
        cfg: &TrainConfig,
    ) -> Result<ModelParams<T>, ModelError> {
        match &self.graph {
            Some(g) => propagate_lightgcn(g, params, cfg.lightgcn_layers),
            None => Ok(params.clone()),
        }
    }

    fn check(
        &self,
        ctx: &EvalContext,
        cfg: &TrainConfig,
        params: &ModelParams<T>,
    ) -> Result<(), ModelError> {
        cfg.validate()?;
        if params.num_users() != self.train.num_users() || params.num_items() != self.train.num_items() {
            return Err(ModelError::Dimension(format!(
                "params are {}x{} but the training store is {}x{}",
                params.num_users(),
                params.num_items(),
                self.train.num_users(),
                self.train.num_items()
            )));
        }
        if params.dim() != ctx.embedding_dim() {
            return Err(ModelError::Dimension(format!(
                "params have dim {} but the context requires {}",
                params.dim(),
                ctx.embedding_dim()
            )));
        }
        if self.kind == ModelKind::UltraGcn && ctx.loss_kind() != LossKind::Bce {
            return Err(ModelError::InvalidConfig(
                "UltraGCN trains with its weighted BCE loss and needs a BCE context".into(),
            ));
        }
        Ok(())
    }
}

/// Value of one mini-batch objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchObjective {
    /// Mean data loss plus the L2 penalty; the quantity the gradients belong to.
    pub objective: f64,
    /// Sum of per-example data losses.
    pub data_loss_sum: f64,
    pub penalty: f64,
}

/// Objective `(1/B) Σ loss(example) + λ Σ ‖row‖²` over the rows the batch
/// touches, with its gradient with respect to the layer-0 embeddings
/// accumulated into `grads`.
pub fn batch_objective<T: Scalar>(
    data: &TrainData<'_, T>,
    ctx: &EvalContext,
    cfg: &TrainConfig,
    params: &ModelParams<T>,
    batch: &[Example],
    grads: &mut Gradients<T>,
) -> Result<BatchObjective, ModelError> {
    data.check(ctx, cfg, params)?;
    if batch.is_empty() {
        return Ok(BatchObjective {
            objective: 0.0,
            data_loss_sum: 0.0,
            penalty: 0.0,
        });
    }
    let scale = T::one() / T::of(batch.len() as f64);
    let gamma = T::of(cfg.ultragcn_gamma);

    let propagated;
    let (emb, mut sink) = match &data.graph {
        Some(g) => {
            propagated = propagate_lightgcn(g, params, cfg.lightgcn_layers)?;
            (&propagated, Some(Gradients::for_params(params)))
        }
        None => (params, None),
    };
    let mut data_loss_sum = 0.0;
    let mut s_negs: Vec<T> = Vec::new();
    let mut d_negs: Vec<T> = Vec::new();
    for ex in batch {
        let (u, p) = (ex.user as usize, ex.pos as usize);
        let eu = emb.user_emb.row(u);
        let ep = emb.item_emb.row(p);
        let s_pos = dot(eu, ep);
        s_negs.clear();
        s_negs.extend(ex.negs.iter().map(|&n| dot(eu, emb.item_emb.row(n as usize))));

        d_negs.clear();
        let (loss, d_pos) = match (data.kind, ctx.loss_kind()) {
            (ModelKind::UltraGcn, _) => {
                let beta = ultragcn_weight(data.train.user_degree(u), data.item_degrees[p])?;
                let l = loss_ultragcn(s_pos, &s_negs, T::of(beta), gamma);
                d_negs.extend_from_slice(&l.d_negs);
                (l.loss, l.d_pos)
            }
            (_, LossKind::Bpr) => {
                let mut loss = T::zero();
                let mut d_pos = T::zero();
                for &s in &s_negs {
                    let l = loss_bpr(s_pos, s);
                    loss += l.loss;
                    d_pos += l.d_pos;
                    d_negs.push(l.d_neg);
                }
                (loss, d_pos)
            }
            (_, LossKind::Bce) => {
                let l = loss_bce(s_pos, &s_negs);
                d_negs.extend_from_slice(&l.d_negs);
                (l.loss, l.d_pos)
            }
        };
        data_loss_sum += loss.f64();

        let g = sink.as_mut().unwrap_or(&mut *grads);
        let gu = g.user_row_mut(u);
        axpy(scale * d_pos, ep, gu);
        for (&n, &d) in ex.negs.iter().zip(&d_negs) {
            axpy(scale * d, emb.item_emb.row(n as usize), gu);
        }
        axpy(scale * d_pos, eu, g.item_row_mut(p));
        for (&n, &d) in ex.negs.iter().zip(&d_negs) {
            axpy(scale * d, eu, g.item_row_mut(n as usize));
        }
    }

    if let (Some(graph), Some(sink)) = (&data.graph, sink) {
        let dim = params.dim();
        let users = params.num_users();
        let mut stacked = sink.user.into_vec();
        stacked.extend_from_slice(sink.item.as_slice());
        let back = propagate_stacked(graph, &stacked, dim, cfg.lightgcn_layers);
        grads.touch_all();
        for (dst, &src) in grads.user.as_mut_slice().iter_mut().zip(&back[..users * dim]) {
            *dst += src;
        }
        for (dst, &src) in grads.item.as_mut_slice().iter_mut().zip(&back[users * dim..]) {
            *dst += src;
        }
    }

    let mut users: Vec<u32> = batch.iter().map(|e| e.user).collect();
    let mut items: Vec<u32> = batch
        .iter()
        .flat_map(|e| std::iter::once(e.pos).chain(e.negs.iter().copied()))
        .collect();
    users.sort_unstable();
    users.dedup();
    items.sort_unstable();
    items.dedup();
    let penalty = l2_penalty(params, &users, &items, T::of(cfg.l2_coefficient), grads).f64();

    Ok(BatchObjective {
        objective: data_loss_sum / batch.len() as f64 + penalty,
        data_loss_sum,
        penalty,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    /// Mean per-positive data loss; `None` when there was nothing to train on.
    pub mean_loss: Option<f64>,
    pub examples: usize,
    pub batches: usize,
}

/// One pass over every training positive in a seeded shuffle.
pub fn train_epoch<T: Scalar, R: Rng + ?Sized>(
    data: &TrainData<'_, T>,
    ctx: &EvalContext,
    cfg: &TrainConfig,
    params: &mut ModelParams<T>,
    opt: &mut AdamState<T>,
    rng: &mut R,
) -> Result<EpochStats, ModelError> {
    data.check(ctx, cfg, params)?;
    if data.pairs.is_empty() {
        return Ok(EpochStats {
            mean_loss: None,
            examples: 0,
            batches: 0,
        });
    }
    let mut order: Vec<u32> = (0..data.pairs.len() as u32).collect();
    order.shuffle(rng);
    let mut grads = Gradients::for_params(params);
    let mut batch = Vec::with_capacity(cfg.batch_size.min(order.len()));
    let mut total = 0.0;
    let mut batches = 0;
    for chunk in order.chunks(cfg.batch_size) {
        batch.clear();
        for &k in chunk {
            let (user, pos) = data.pairs[k as usize];
            let negs = sample_negatives(
                data.train,
                user as usize,
                ctx.num_negatives(),
                ctx.sampler_kind(),
                rng,
            )?;
            batch.push(Example { user, pos, negs });
        }
        grads.clear();
        let obj = batch_objective(data, ctx, cfg, params, &batch, &mut grads)?;
        adam_step(opt, params, &grads, cfg.learning_rate)?;
        debug_assert!(params.is_finite());
        total += obj.data_loss_sum;
        batches += 1;
    }
    Ok(EpochStats {
        mean_loss: Some(total / data.pairs.len() as f64),
        examples: data.pairs.len(),
        batches,
    })
}

/// Owns a model's parameters, optimizer state and random stream across
/// epochs.
#[derive(Debug, Clone)]
pub struct Trainer<'a, T> {
    data: TrainData<'a, T>,
    ctx: EvalContext,
    cfg: TrainConfig,
    params: ModelParams<T>,
    opt: AdamState<T>,
    rng: ChaCha8Rng,
    epochs_done: usize,
}

impl<'a, T: Scalar> Trainer<'a, T> {
    /// Parameters are seeded with `cfg.seed`; shuffling and negative sampling
    /// use an independent stream derived from it.
    pub fn new(
        kind: ModelKind,
        train: &'a InteractionStore,
        ctx: EvalContext,
        cfg: TrainConfig,
    ) -> Result<Self, ModelError> {
        let params = init_params(
            train.num_users(),
            train.num_items(),
            ctx.embedding_dim(),
            cfg.seed,
        )?;
        let data = TrainData::new(kind, train);
        data.check(&ctx, &cfg, &params)?;
        Ok(Self {
            opt: AdamState::new(&params),
            rng: ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15),
            data,
            ctx,
            cfg,
            params,
            epochs_done: 0,
        })
    }

    pub fn run_epoch(&mut self) -> Result<EpochStats, ModelError> {
        let stats = train_epoch(
            &self.data,
            &self.ctx,
            &self.cfg,
            &mut self.params,
            &mut self.opt,
            &mut self.rng,
        )?;
        self.epochs_done += 1;
        Ok(stats)
    }

    pub fn epochs_done(&self) -> usize {
        self.epochs_done
    }

    pub fn params(&self) -> &ModelParams<T> {
        &self.params
    }

    pub fn into_params(self) -> ModelParams<T> {
        self.params
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn context(&self) -> &EvalContext {
        &self.ctx
    }

    pub fn kind(&self) -> ModelKind {
        self.data.kind
    }

    pub fn final_embeddings(&self) -> Result<ModelParams<T>, ModelError> {
        self.data.final_embeddings(&self.params, &self.cfg)
    }
}
