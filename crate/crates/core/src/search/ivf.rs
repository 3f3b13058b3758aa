use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::topk::TopK;
use super::{check_finite, check_query_args, ItemIndex, MaskSpec, QueryHits, SearchError, TopKResult};
use crate::matrix::Matrix;
use crate::scalar::{dot, Scalar};

pub const KMEANS_ITERATIONS: usize = 25;

/// Inverted lists over a k-means partition of the items. Lists hold
/// ascending item ids together with a contiguous copy of their vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct IvfIndex<T> {
    items: Matrix<T>,
    centroids: Matrix<T>,
    lists: Vec<Vec<u32>>,
    list_vectors: Vec<Matrix<T>>,
}

fn sq_dist<T: Scalar>(a: &[T], b: &[T]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = (x - y).f64();
            d * d
        })
        .sum()
}

fn nearest<T: Scalar>(v: &[T], centroids: &Matrix<T>) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for c in 0..centroids.rows() {
        let d = sq_dist(v, centroids.row(c));
        if d < best_d {
            best_d = d;
            best = c;
        }
    }
    best
}

/// k-means with seeded distinct-row initialisation and a fixed
/// [`KMEANS_ITERATIONS`]. An empty cluster is re-seeded with the point of the
/// largest cluster farthest from that cluster's centroid.
pub fn build_ivf<T: Scalar>(
    item_emb: Matrix<T>,
    n_clusters: usize,
    seed: u64,
) -> Result<ItemIndex<T>, SearchError> {
    check_finite(&item_emb, "item embeddings")?;
    let n = item_emb.rows();
    let dim = item_emb.cols();
    if n == 0 {
        return Err(SearchError::Build("no items to cluster".into()));
    }
    if n_clusters == 0 || n_clusters > n {
        return Err(SearchError::Build(format!(
            "n_clusters must be in 1..={n}, got {n_clusters}"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut init: Vec<usize> = sample(&mut rng, n, n_clusters).into_vec();
    init.sort_unstable();
    let mut centroids = Matrix::zeros(n_clusters, dim);
    for (c, &i) in init.iter().enumerate() {
        centroids.row_mut(c).copy_from_slice(item_emb.row(i));
    }

    let assign = |centroids: &Matrix<T>| -> Vec<usize> {
        (0..n)
            .into_par_iter()
            .map(|i| nearest(item_emb.row(i), centroids))
            .collect()
    };

    for _ in 0..KMEANS_ITERATIONS {
        let labels = assign(&centroids);
        let mut sums = vec![0.0f64; n_clusters * dim];
        let mut counts = vec![0usize; n_clusters];
        for (i, &c) in labels.iter().enumerate() {
            counts[c] += 1;
            for (s, v) in sums[c * dim..(c + 1) * dim].iter_mut().zip(item_emb.row(i)) {
                *s += v.f64();
            }
        }
        for c in 0..n_clusters {
            if counts[c] > 0 {
                let inv = 1.0 / counts[c] as f64;
                for (dst, s) in centroids.row_mut(c).iter_mut().zip(&sums[c * dim..(c + 1) * dim]) {
                    *dst = T::of(s * inv);
                }
            }
        }
        let mut labels = labels;
        for c in 0..n_clusters {
            if counts[c] > 0 {
                continue;
            }
            let largest = (0..n_clusters).max_by_key(|&x| (counts[x], std::cmp::Reverse(x))).unwrap();
            if counts[largest] < 2 {
                continue;
            }
            let far = (0..n)
                .filter(|&i| labels[i] == largest)
                .map(|i| (sq_dist(item_emb.row(i), centroids.row(largest)), i))
                .fold((f64::NEG_INFINITY, 0), |a, b| if b.0 > a.0 { b } else { a })
                .1;
            centroids.row_mut(c).copy_from_slice(item_emb.row(far));
            labels[far] = c;
            counts[largest] -= 1;
            counts[c] = 1;
        }
    }

    let labels = assign(&centroids);
    let mut lists = vec![Vec::new(); n_clusters];
    for (i, &c) in labels.iter().enumerate() {
        lists[c].push(i as u32);
    }
    Ok(ItemIndex::Ivf(IvfIndex::from_parts(item_emb, centroids, lists)?))
}

impl<T: Scalar> IvfIndex<T> {
    pub(crate) fn from_parts(
        items: Matrix<T>,
        centroids: Matrix<T>,
        lists: Vec<Vec<u32>>,
    ) -> Result<Self, SearchError> {
        if centroids.rows() != lists.len() || centroids.cols() != items.cols() {
            return Err(SearchError::Format("centroids and lists disagree".into()));
        }
        let mut seen = vec![false; items.rows()];
        for list in &lists {
            for &i in list {
                let slot = seen
                    .get_mut(i as usize)
                    .ok_or_else(|| SearchError::Format(format!("list item {i} out of range")))?;
                if *slot {
                    return Err(SearchError::Format(format!("item {i} listed twice")));
                }
                *slot = true;
            }
            if list.windows(2).any(|w| w[0] >= w[1]) {
                return Err(SearchError::Format("inverted list not ascending".into()));
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(SearchError::Format("some items are in no list".into()));
        }
        let list_vectors = lists
            .iter()
            .map(|l| {
                let mut m = Matrix::zeros(l.len(), items.cols());
                for (r, &i) in l.iter().enumerate() {
                    m.row_mut(r).copy_from_slice(items.row(i as usize));
                }
                m
            })
            .collect();
        Ok(Self {
            items,
            centroids,
            lists,
            list_vectors,
        })
    }

    pub fn items(&self) -> &Matrix<T> {
        &self.items
    }

    pub fn centroids(&self) -> &Matrix<T> {
        &self.centroids
    }

    pub fn lists(&self) -> &[Vec<u32>] {
        &self.lists
    }

    pub fn n_clusters(&self) -> usize {
        self.lists.len()
    }

    pub fn search(
        &self,
        queries: &Matrix<T>,
        k: usize,
        masks: &MaskSpec<'_>,
        nprobe: usize,
    ) -> Result<TopKResult<T>, SearchError> {
        check_query_args(&self.items, queries, k, masks)?;
        if nprobe == 0 || nprobe > self.n_clusters() {
            return Err(SearchError::InvalidArgument(format!(
                "nprobe must be in 1..={}, got {nprobe}",
                self.n_clusters()
            )));
        }
        let hits = (0..queries.rows())
            .into_par_iter()
            .map(|q| {
                let qrow = queries.row(q);
                let mut order: Vec<(T, usize)> = (0..self.n_clusters())
                    .map(|c| (dot(qrow, self.centroids.row(c)), c))
                    .collect();
                order.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
                let mask = masks.get(q);
                let mut heap = TopK::new(k);
                for &(_, c) in order.iter().take(nprobe) {
                    let vecs = &self.list_vectors[c];
                    for (r, &id) in self.lists[c].iter().enumerate() {
                        if mask.binary_search(&id).is_ok() {
                            continue;
                        }
                        heap.push(dot(qrow, vecs.row(r)), id);
                    }
                }
                let short = heap.len() < k;
                let (ids, scores) = heap.into_sorted();
                QueryHits { ids, scores, short }
            })
            .collect();
        Ok(TopKResult { k, queries: hits })
    }
}
