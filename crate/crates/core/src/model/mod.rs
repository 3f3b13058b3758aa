//! Embedding recommenders and their training loop.
//!
//! Three model kinds share one parameterization (user and item embedding
//! tables scored by inner product):
//!
//! - MF scores layer-0 embeddings directly.
//! - LightGCN scores the mean of `layers + 1` propagations over the
//!   symmetrically normalized user–item graph. Propagation is linear and the
//!   normalized adjacency is symmetric, so the backward pass applies the same
//!   propagation to the upstream gradient.
//! - UltraGCN (core) is MF trained with a degree-weighted positive BCE term.

mod checkpoint;
mod graph;
mod loss;
mod optim;
mod params;
mod sampling;
mod train;

use std::fmt;
use std::io;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use graph::{normalize_adjacency, propagate_lightgcn, propagate_stacked, NormalizedBipartiteGraph};
pub use loss::{
    l2_penalty, loss_bce, loss_bpr, loss_ultragcn, sigmoid, softplus, ultragcn_weight, ListLoss,
    PairLoss,
};
pub use optim::{adam_step, AdamState, Gradients, ADAM_BETA1, ADAM_BETA2, ADAM_EPSILON};
pub use params::{init_params, score, ModelParams, INIT_STD};
pub use sampling::sample_negatives;
pub use train::{
    batch_objective, train_epoch, BatchObjective, EpochStats, Example, TrainConfig, TrainData,
    Trainer,
};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("{what} id {id} out of range (< {bound})")]
    Index {
        what: &'static str,
        id: usize,
        bound: usize,
    },
    #[error("user {user} has interacted with every item; no negative can be sampled")]
    Exhausted { user: usize },
    #[error("user degree is zero; the pair cannot be a training positive")]
    DegenerateDegree,
    #[error("poisoned update: {0}")]
    PoisonedUpdate(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Mf,
    #[serde(rename = "ultragcn")]
    UltraGcn,
    #[serde(rename = "lightgcn")]
    LightGcn,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Mf, ModelKind::UltraGcn, ModelKind::LightGcn];

    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::Mf => "mf",
            ModelKind::UltraGcn => "ultragcn",
            ModelKind::LightGcn => "lightgcn",
        }
    }

    /// Column label used in report tables.
    pub fn label(&self) -> &'static str {
        match self {
            ModelKind::Mf => "MF",
            ModelKind::UltraGcn => "UltraGCN",
            ModelKind::LightGcn => "LightGCN",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "mf" => Ok(ModelKind::Mf),
            "lightgcn" => Ok(ModelKind::LightGcn),
            "ultragcn" => Ok(ModelKind::UltraGcn),
            _ => Err(ModelError::InvalidConfig(format!("unknown model `{s}`"))),
        }
    }
}
