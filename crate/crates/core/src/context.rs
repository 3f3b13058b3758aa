//! The experimental context two runs must share before their scores may be
//! compared.
//!
//! Learning rate, L2 coefficient and other tunables are deliberately absent:
//! each model is tuned separately within a context.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Bpr,
    Bce,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    /// Uniform over items outside the user's training row.
    UniformReject,
    /// Uniform over all items.
    UniformFree,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ContextError {
    #[error("num_negatives must be at least 1")]
    NoNegatives,
    #[error("embedding_dim must be at least 1")]
    ZeroDim,
    #[error("k_list must be non-empty and strictly increasing with every K >= 1, got {0:?}")]
    BadKList(Vec<usize>),
    #[error("dataset_id must be non-empty")]
    EmptyDataset,
    #[error("unknown {what} `{value}`")]
    Unknown { what: &'static str, value: String },
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossKind::Bpr => "bpr",
            LossKind::Bce => "bce",
        })
    }
}

impl FromStr for LossKind {
    type Err = ContextError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "bpr" => Ok(LossKind::Bpr),
            "bce" => Ok(LossKind::Bce),
            _ => Err(ContextError::Unknown {
                what: "loss",
                value: s.to_string(),
            }),
        }
    }
}

impl fmt::Display for SamplerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SamplerKind::UniformReject => "uniform_reject",
            SamplerKind::UniformFree => "uniform_free",
        })
    }
}

impl FromStr for SamplerKind {
    type Err = ContextError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "uniform_reject" | "reject" => Ok(SamplerKind::UniformReject),
            "uniform_free" | "free" => Ok(SamplerKind::UniformFree),
            _ => Err(ContextError::Unknown {
                what: "sampler",
                value: s.to_string(),
            }),
        }
    }
}

/// 64-bit digest of an [`EvalContext`]'s canonical serialization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Fingerprint(pub u64);

impl fmt::Display for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

impl FromStr for Fingerprint {
    type Err = ContextError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.len() != 16 {
            return Err(ContextError::Unknown {
                what: "fingerprint",
                value: s.to_string(),
            });
        }
        u64::from_str_radix(s, 16)
            .map(Fingerprint)
            .map_err(|_| ContextError::Unknown {
                what: "fingerprint",
                value: s.to_string(),
            })
    }
}

impl Serialize for Fingerprint {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Fingerprint {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawContext", into = "RawContext")]
pub struct EvalContext {
    dataset_id: String,
    loss_kind: LossKind,
    num_negatives: usize,
    embedding_dim: usize,
    sampler_kind: SamplerKind,
    k_list: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct RawContext {
    dataset_id: String,
    loss_kind: LossKind,
    num_negatives: usize,
    embedding_dim: usize,
    sampler_kind: SamplerKind,
    k_list: Vec<usize>,
}

impl TryFrom<RawContext> for EvalContext {
    type Error = ContextError;

    fn try_from(r: RawContext) -> Result<Self, Self::Error> {
        EvalContext::new(
            r.dataset_id,
            r.loss_kind,
            r.num_negatives,
            r.embedding_dim,
            r.sampler_kind,
            r.k_list,
        )
    }
}

impl From<EvalContext> for RawContext {
    fn from(c: EvalContext) -> Self {
        RawContext {
            dataset_id: c.dataset_id,
            loss_kind: c.loss_kind,
            num_negatives: c.num_negatives,
            embedding_dim: c.embedding_dim,
            sampler_kind: c.sampler_kind,
            k_list: c.k_list,
        }
    }
}

impl EvalContext {
    pub fn new(
        dataset_id: impl Into<String>,
        loss_kind: LossKind,
        num_negatives: usize,
        embedding_dim: usize,
        sampler_kind: SamplerKind,
        k_list: Vec<usize>,
    ) -> Result<Self, ContextError> {
        let dataset_id = dataset_id.into();
        if dataset_id.is_empty() {
            return Err(ContextError::EmptyDataset);
        }
        if num_negatives == 0 {
            return Err(ContextError::NoNegatives);
        }
        if embedding_dim == 0 {
            return Err(ContextError::ZeroDim);
        }
        if k_list.is_empty() || k_list[0] == 0 || k_list.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ContextError::BadKList(k_list));
        }
        Ok(Self {
            dataset_id,
            loss_kind,
            num_negatives,
            embedding_dim,
            sampler_kind,
            k_list,
        })
    }

    /// One negative per positive, rejection sampling, 64 dimensions, K=20.
    pub fn standard(dataset_id: impl Into<String>, loss_kind: LossKind) -> Self {
        Self::new(dataset_id, loss_kind, 1, 64, SamplerKind::UniformReject, vec![20])
            .expect("standard context is valid")
    }

    pub fn dataset_id(&self) -> &str {
        &self.dataset_id
    }

    pub fn loss_kind(&self) -> LossKind {
        self.loss_kind
    }

    pub fn num_negatives(&self) -> usize {
        self.num_negatives
    }

    pub fn embedding_dim(&self) -> usize {
        self.embedding_dim
    }

    pub fn sampler_kind(&self) -> SamplerKind {
        self.sampler_kind
    }

    pub fn k_list(&self) -> &[usize] {
        &self.k_list
    }

    pub fn max_k(&self) -> usize {
        *self.k_list.last().unwrap()
    }

    /// Field-ordered `key=value` lines; the fingerprint input.
    pub fn canonical(&self) -> String {
        let ks: Vec<String> = self.k_list.iter().map(usize::to_string).collect();
        format!(
            "dataset_id={}\nloss_kind={}\nnum_negatives={}\nembedding_dim={}\nsampler_kind={}\nk_list={}\n",
            self.dataset_id,
            self.loss_kind,
            self.num_negatives,
            self.embedding_dim,
            self.sampler_kind,
            ks.join(",")
        )
    }

    pub fn fingerprint(&self) -> Fingerprint {
        let digest = Sha256::digest(self.canonical().as_bytes());
        let mut b = [0u8; 8];
        b.copy_from_slice(&digest[..8]);
        Fingerprint(u64::from_be_bytes(b))
    }
}

impl fmt::Display for EvalContext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{{dataset={}, loss={}, negatives={}, dim={}, sampler={}, k={:?}}}",
            self.dataset_id,
            self.loss_kind,
            self.num_negatives,
            self.embedding_dim,
            self.sampler_kind,
            self.k_list
        )
    }
}
