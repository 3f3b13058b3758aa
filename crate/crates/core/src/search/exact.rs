use rayon::prelude::*;

use super::topk::TopK;
use super::{check_query_args, MaskSpec, QueryHits, SearchError, SearchOptions, TopKResult};
use crate::matrix::Matrix;
use crate::scalar::{dot, Scalar};

/// Bytes of one score tile for the given options.
pub fn tile_bytes<T: Scalar>(opts: SearchOptions) -> usize {
    opts.query_block * opts.item_block * std::mem::size_of::<T>()
}

/// Blocked exact search. Query blocks run in parallel; each worker holds one
/// score tile and one heap per query of its block.
pub fn search_exact<T: Scalar>(
    items: &Matrix<T>,
    queries: &Matrix<T>,
    k: usize,
    masks: &MaskSpec<'_>,
    opts: SearchOptions,
) -> Result<TopKResult<T>, SearchError> {
    check_query_args(items, queries, k, masks)?;
    if opts.query_block == 0 || opts.item_block == 0 {
        return Err(SearchError::InvalidArgument("block sizes must be positive".into()));
    }
    let nq = queries.rows();
    let starts: Vec<usize> = (0..nq).step_by(opts.query_block).collect();
    let blocks: Vec<Vec<QueryHits<T>>> = starts
        .par_iter()
        .map(|&q0| {
            let q1 = (q0 + opts.query_block).min(nq);
            search_block(items, queries, q0..q1, k, masks, opts.item_block)
        })
        .collect();
    Ok(TopKResult {
        k,
        queries: blocks.into_iter().flatten().collect(),
    })
}

fn search_block<T: Scalar>(
    items: &Matrix<T>,
    queries: &Matrix<T>,
    range: std::ops::Range<usize>,
    k: usize,
    masks: &MaskSpec<'_>,
    item_block: usize,
) -> Vec<QueryHits<T>> {
    let nq = range.len();
    let ni = items.rows();
    let ib = item_block.min(ni.max(1));
    let mut heaps: Vec<TopK<T>> = (0..nq).map(|_| TopK::new(k)).collect();
    let mut cursors = vec![0usize; nq];
    let mut tile = vec![T::zero(); nq * ib];

    let mut i0 = 0;
    while i0 < ni {
        let i1 = (i0 + ib).min(ni);
        let width = i1 - i0;
        for (qi, q) in range.clone().enumerate() {
            let qrow = queries.row(q);
            let out = &mut tile[qi * ib..qi * ib + width];
            for (j, s) in out.iter_mut().enumerate() {
                *s = dot(qrow, items.row(i0 + j));
            }
        }
        for (qi, q) in range.clone().enumerate() {
            let mask = masks.get(q);
            let cur = &mut cursors[qi];
            let heap = &mut heaps[qi];
            for (j, &s) in tile[qi * ib..qi * ib + width].iter().enumerate() {
                let id = (i0 + j) as u32;
                while *cur < mask.len() && mask[*cur] < id {
                    *cur += 1;
                }
                if *cur < mask.len() && mask[*cur] == id {
                    continue;
                }
                heap.push(s, id);
            }
        }
        i0 = i1;
    }

    heaps
        .into_iter()
        .map(|h| {
            let short = h.len() < k;
            let (ids, scores) = h.into_sorted();
            QueryHits { ids, scores, short }
        })
        .collect()
}

/// Top-`k` of one caller-supplied score row, skipping `mask` (sorted).
pub fn select_top_k<T: Scalar>(scores: &[T], mask: &[u32], k: usize) -> QueryHits<T> {
    let mut heap = TopK::new(k);
    let mut cur = 0;
    for (j, &s) in scores.iter().enumerate() {
        let id = j as u32;
        while cur < mask.len() && mask[cur] < id {
            cur += 1;
        }
        if cur < mask.len() && mask[cur] == id {
            continue;
        }
        heap.push(s, id);
    }
    let short = heap.len() < k;
    let (ids, scores) = heap.into_sorted();
    QueryHits { ids, scores, short }
}
