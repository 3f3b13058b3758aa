//! Masked top-K maximum inner product search over item embeddings.
//!
//! The exact path scores queries against items one tile at a time
//! (`query_block × item_block` scores) and keeps a size-K heap per query, so
//! memory is bounded by the tile regardless of how many queries are asked.
//! The IVF path scores only items in the `nprobe` clusters whose centroids
//! have the largest inner product with the query.

mod exact;
mod io;
mod ivf;
mod topk;

use std::io as stdio;

use thiserror::Error;

pub use exact::{search_exact, select_top_k, tile_bytes};
pub use io::{read_index, write_index};
pub use ivf::{build_ivf, IvfIndex, KMEANS_ITERATIONS};

use crate::matrix::Matrix;
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("cannot build index: {0}")]
    Build(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid index file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] stdio::Error),
}

/// Tile shape of the exact search.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchOptions {
    pub query_block: usize,
    pub item_block: usize,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            query_block: 256,
            item_block: 4096,
        }
    }
}

/// Per-query excluded item ids, each sorted ascending.
#[derive(Debug, Clone)]
pub struct MaskSpec<'a> {
    per_query: Vec<&'a [u32]>,
}

impl<'a> MaskSpec<'a> {
    pub fn none(num_queries: usize) -> Self {
        Self {
            per_query: vec![&[]; num_queries],
        }
    }

    pub fn new(per_query: Vec<&'a [u32]>) -> Self {
        Self { per_query }
    }

    pub fn len(&self) -> usize {
        self.per_query.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_query.is_empty()
    }

    pub fn get(&self, q: usize) -> &'a [u32] {
        self.per_query[q]
    }

    fn validate(&self, num_queries: usize, num_items: usize) -> Result<(), SearchError> {
        if self.per_query.len() != num_queries {
            return Err(SearchError::InvalidArgument(format!(
                "{} masks for {num_queries} queries",
                self.per_query.len()
            )));
        }
        for (q, m) in self.per_query.iter().enumerate() {
            if m.windows(2).any(|w| w[0] >= w[1]) {
                return Err(SearchError::InvalidArgument(format!(
                    "mask of query {q} is not strictly ascending"
                )));
            }
            if m.last().is_some_and(|&l| l as usize >= num_items) {
                return Err(SearchError::InvalidArgument(format!(
                    "mask of query {q} references an item outside the index"
                )));
            }
        }
        Ok(())
    }
}

/// Retrieved items of one query, best first.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryHits<T> {
    pub ids: Vec<u32>,
    pub scores: Vec<T>,
    /// Fewer than K unmasked candidates were available.
    pub short: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopKResult<T> {
    pub k: usize,
    pub queries: Vec<QueryHits<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExactIndex<T> {
    items: Matrix<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ItemIndex<T> {
    Exact(ExactIndex<T>),
    Ivf(IvfIndex<T>),
}

fn check_finite<T: Scalar>(m: &Matrix<T>, what: &str) -> Result<(), SearchError> {
    if m.is_finite() {
        Ok(())
    } else {
        Err(SearchError::Build(format!("{what} contain NaN or infinite entries")))
    }
}

pub fn build_exact<T: Scalar>(item_emb: Matrix<T>) -> Result<ItemIndex<T>, SearchError> {
    check_finite(&item_emb, "item embeddings")?;
    Ok(ItemIndex::Exact(ExactIndex { items: item_emb }))
}

impl<T: Scalar> ItemIndex<T> {
    pub fn items(&self) -> &Matrix<T> {
        match self {
            ItemIndex::Exact(e) => &e.items,
            ItemIndex::Ivf(i) => i.items(),
        }
    }

    pub fn num_items(&self) -> usize {
        self.items().rows()
    }

    pub fn dim(&self) -> usize {
        self.items().cols()
    }
}

/// Top-`k` items per query row. `nprobe` is ignored by exact indices.
pub fn search<T: Scalar>(
    index: &ItemIndex<T>,
    queries: &Matrix<T>,
    k: usize,
    masks: &MaskSpec<'_>,
    nprobe: usize,
) -> Result<TopKResult<T>, SearchError> {
    search_with(index, queries, k, masks, nprobe, SearchOptions::default())
}

pub fn search_with<T: Scalar>(
    index: &ItemIndex<T>,
    queries: &Matrix<T>,
    k: usize,
    masks: &MaskSpec<'_>,
    nprobe: usize,
    opts: SearchOptions,
) -> Result<TopKResult<T>, SearchError> {
    match index {
        ItemIndex::Exact(e) => search_exact(&e.items, queries, k, masks, opts),
        ItemIndex::Ivf(ivf) => ivf.search(queries, k, masks, nprobe),
    }
}

fn check_query_args<T: Scalar>(
    items: &Matrix<T>,
    queries: &Matrix<T>,
    k: usize,
    masks: &MaskSpec<'_>,
) -> Result<(), SearchError> {
    if k == 0 {
        return Err(SearchError::InvalidArgument("K must be at least 1".into()));
    }
    if queries.cols() != items.cols() {
        return Err(SearchError::Dimension(format!(
            "queries have dim {} but items have dim {}",
            queries.cols(),
            items.cols()
        )));
    }
    if !queries.is_finite() {
        return Err(SearchError::InvalidArgument("queries contain NaN or infinite entries".into()));
    }
    masks.validate(queries.rows(), items.rows())
}

/// Mean over queries of `|approx ∩ exact| / k`, using the first `k` ids of
/// each. Returns 1.0 when there are no queries.
pub fn index_recall<T>(approx: &TopKResult<T>, exact: &TopKResult<T>, k: usize) -> f64 {
    let n = approx.queries.len().min(exact.queries.len());
    if n == 0 || k == 0 {
        return 1.0;
    }
    let total: f64 = approx
        .queries
        .iter()
        .zip(&exact.queries)
        .map(|(a, e)| {
            let truth = &e.ids[..e.ids.len().min(k)];
            let hit = a.ids.iter().take(k).filter(|i| truth.contains(i)).count();
            hit as f64 / k as f64
        })
        .sum();
    total / n as f64
}
