//! Benchmarking toolkit for implicit-feedback recommenders.
//!
//! The crate covers the whole pipeline of a comparison run:
//!
//! - [`data`]: parsing, validating and caching user–item interaction splits.
//! - [`model`]: MF, LightGCN-style propagation and UltraGCN-style weighted
//!   loss, trained with sampled negatives and a sparse Adam optimizer.
//! - [`search`]: masked top-K maximum inner product retrieval (exact blocked
//!   and IVF).
//! - [`eval`]: mini-batched full-catalog evaluation into a [`RunRecord`].
//! - [`metrics`]: NDCG/Recall/Precision and the gain-relative-to-MF ratio,
//!   which refuses to compare runs from different [`EvalContext`]s.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below name the two concrete instantiations.

pub mod context;
pub mod data;
pub mod eval;
pub mod matrix;
pub mod metrics;
pub mod model;
pub mod scalar;
pub mod search;

pub use context::{EvalContext, Fingerprint, LossKind, SamplerKind};
pub use data::{DatasetStats, InteractionStore, Split};
pub use matrix::Matrix;
pub use metrics::{MetricId, MetricScore, RunRecord};
pub use model::{ModelKind, ModelParams, TrainConfig};
pub use scalar::Scalar;
pub use search::{ItemIndex, TopKResult};

pub type Matrix32 = Matrix<f32>;
pub type Matrix64 = Matrix<f64>;
pub type ModelParams32 = ModelParams<f32>;
pub type ModelParams64 = ModelParams<f64>;
pub type ItemIndex32 = ItemIndex<f32>;
pub type ItemIndex64 = ItemIndex<f64>;
pub type TopKResult32 = TopKResult<f32>;
pub type TopKResult64 = TopKResult<f64>;
pub type NormalizedGraph32 = model::NormalizedBipartiteGraph<f32>;
pub type NormalizedGraph64 = model::NormalizedBipartiteGraph<f64>;
pub type AdamState32 = model::AdamState<f32>;
pub type AdamState64 = model::AdamState<f64>;
