//! Reference implementations the library is checked against. They favour
//! the most literal reading of each definition over speed.
#![allow(dead_code)]

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use recbench::data::build_split;
use recbench::scalar::dot;
use recbench::{InteractionStore, Matrix, Scalar, Split};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_matrix<T: Scalar>(rows: usize, cols: usize, std: f64, rng: &mut ChaCha8Rng) -> Matrix<T> {
    let data = (0..rows * cols)
        .map(|_| {
            // Box-Muller keeps this independent of the library's sampler
            let u1: f64 = rng.random::<f64>().max(1e-300);
            let u2: f64 = rng.random();
            T::of(std * (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos())
        })
        .collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

// ---- metrics ----

fn gain(position: usize) -> f64 {
    // 1-based position p contributes 1 / log2(p + 1)
    std::f64::consts::LN_2 / ((position + 1) as f64).ln()
}

pub fn ref_ndcg(ranked: &[u32], truth: &HashSet<u32>, k: usize) -> f64 {
    let mut dcg = 0.0;
    for (p, id) in ranked.iter().take(k).enumerate() {
        if truth.contains(id) {
            dcg += gain(p + 1);
        }
    }
    let mut idcg = 0.0;
    for p in 1..=k.min(truth.len()) {
        idcg += gain(p);
    }
    dcg / idcg
}

pub fn ref_recall(ranked: &[u32], truth: &HashSet<u32>, k: usize) -> f64 {
    let top: HashSet<u32> = ranked.iter().take(k).copied().collect();
    top.intersection(truth).count() as f64 / truth.len() as f64
}

pub fn ref_precision(ranked: &[u32], truth: &HashSet<u32>, k: usize) -> f64 {
    let top: HashSet<u32> = ranked.iter().take(k).copied().collect();
    top.intersection(truth).count() as f64 / k as f64
}

// ---- retrieval ----

/// Scores every unmasked item, sorts by (-score, id) and truncates.
pub fn naive_top_k<T: Scalar>(items: &Matrix<T>, query: &[T], mask: &[u32], k: usize) -> Vec<(u32, T)> {
    let masked: HashSet<u32> = mask.iter().copied().collect();
    let mut all: Vec<(u32, T)> = (0..items.rows() as u32)
        .filter(|i| !masked.contains(i))
        .map(|i| (i, dot(query, items.row(i as usize))))
        .collect();
    all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    all.truncate(k);
    all
}

// ---- graphs ----

/// Dense symmetric-normalized adjacency over users then items.
pub fn dense_normalized(train: &InteractionStore) -> Vec<Vec<f64>> {
    let (u, i) = (train.num_users(), train.num_items());
    let n = u + i;
    let mut a = vec![vec![0.0; n]; n];
    for (user, item) in train.pairs() {
        a[user as usize][u + item as usize] = 1.0;
        a[u + item as usize][user as usize] = 1.0;
    }
    let deg: Vec<f64> = a.iter().map(|r| r.iter().sum()).collect();
    for r in 0..n {
        for c in 0..n {
            if a[r][c] != 0.0 {
                a[r][c] /= (deg[r] * deg[c]).sqrt();
            }
        }
    }
    a
}

/// `mean_{k=0..layers} A^k E` with dense products.
pub fn dense_propagate(a: &[Vec<f64>], e: &[Vec<f64>], layers: usize) -> Vec<Vec<f64>> {
    let n = e.len();
    let d = if n == 0 { 0 } else { e[0].len() };
    let mut cur = e.to_vec();
    let mut acc = e.to_vec();
    for _ in 0..layers {
        let mut next = vec![vec![0.0; d]; n];
        for r in 0..n {
            for (c, row) in cur.iter().enumerate() {
                if a[r][c] != 0.0 {
                    for j in 0..d {
                        next[r][j] += a[r][c] * row[j];
                    }
                }
            }
        }
        for r in 0..n {
            for j in 0..d {
                acc[r][j] += next[r][j];
            }
        }
        cur = next;
    }
    let s = 1.0 / (layers + 1) as f64;
    acc.iter().map(|r| r.iter().map(|x| x * s).collect()).collect()
}

// ---- data ----

/// Each user gets `per_user` distinct random items; the first `test` of them
/// go to the test side.
pub fn random_split(users: usize, items: usize, per_user: usize, test: usize, rng: &mut ChaCha8Rng) -> Split {
    let mut train_rows = Vec::with_capacity(users);
    let mut test_rows = Vec::with_capacity(users);
    for _ in 0..users {
        let picked = rand::seq::index::sample(rng, items, per_user.min(items)).into_vec();
        let picked: Vec<u32> = picked.into_iter().map(|x| x as u32).collect();
        let t = test.min(picked.len());
        test_rows.push(picked[..t].to_vec());
        train_rows.push(picked[t..].to_vec());
    }
    build_split(
        InteractionStore::from_rows(train_rows, items).unwrap(),
        InteractionStore::from_rows(test_rows, items).unwrap(),
    )
    .unwrap()
}

pub fn random_store(users: usize, items: usize, density: f64, rng: &mut ChaCha8Rng) -> InteractionStore {
    let rows = (0..users)
        .map(|_| (0..items as u32).filter(|_| rng.random::<f64>() < density).collect())
        .collect();
    InteractionStore::from_rows(rows, items).unwrap()
}

// ---- finite differences ----

pub const FD_STEP: f64 = 1e-5;

/// `|a - n| <= tol * max(|a|, |n|)`, with an absolute floor for values that
/// are zero up to cancellation noise.
pub fn close_rel(analytic: f64, numeric: f64, tol: f64) -> bool {
    let diff = (analytic - numeric).abs();
    diff <= tol * analytic.abs().max(numeric.abs()) || diff < 1e-9
}

pub fn central_diff(f: impl Fn(f64) -> f64, x: f64) -> f64 {
    (f(x + FD_STEP) - f(x - FD_STEP)) / (2.0 * FD_STEP)
}
