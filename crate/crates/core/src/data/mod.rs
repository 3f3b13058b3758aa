//! Dataset lifecycle: fetch, parse, validate, cache and summarize
//! user–item interaction splits.

mod cache;
mod fetch;
mod split;
mod store;
mod synthetic;

use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub use cache::{decode_split, encode_split, CacheLock};
pub use fetch::{
    default_cache_root, fetch, prepare, prepare_report, sha256_file, DatasetDescriptor,
    FetchReport, Prepared, RemoteFile, CACHE_ENV, DEFAULT_BASE_URL, KNOWN_DATASETS, TEST_FILE,
    TRAIN_FILE,
};
pub use split::{build_split, holdout, stats, DatasetStats, Split};
pub use store::{parse_adjacency_list, InteractionStore};
pub use synthetic::{SyntheticSpec, SYNTHETIC_PREFIX};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid interaction store: {0}")]
    InvalidStore(String),
    #[error("{} (user, item) pairs appear in both train and test: {}", .pairs.len(), preview(.pairs))]
    Leakage { pairs: Vec<(u32, u32)> },
    #[error("density is undefined for a split with zero users or items")]
    UndefinedDensity,
    #[error("fetching {url} failed (retryable): {message}")]
    Fetch { url: String, message: String },
    #[error("{} is corrupt: expected sha256 {expected}, got {actual}", .path.display())]
    CorruptData {
        path: PathBuf,
        expected: String,
        actual: String,
    },
    #[error("invalid cache: {0}")]
    Cache(String),
    #[error("invalid dataset descriptor: {0}")]
    InvalidDescriptor(String),
    #[error("unknown dataset `{0}`")]
    UnknownDataset(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl DataError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, DataError::Fetch { .. })
    }
}

fn preview(pairs: &[(u32, u32)]) -> String {
    let shown: Vec<String> = pairs.iter().take(10).map(|p| format!("{p:?}")).collect();
    let more = if pairs.len() > 10 { ", ..." } else { "" };
    format!("{}{more}", shown.join(", "))
}
