mod common;

use std::collections::HashSet;

use common::*;
use rand::Rng;
use recbench::data::build_split;
use recbench::eval::{aggregate, evaluate, evaluate_report, evaluate_with_scorer, EvalError, EvalRequest, PartialSums};
use recbench::metrics::GroundTruth;
use recbench::scalar::dot;
use recbench::{EvalContext, InteractionStore, LossKind, Matrix, MetricId, ModelParams, SamplerKind};

fn ctx(dim: usize, ks: &[usize]) -> EvalContext {
    EvalContext::new("t", LossKind::Bpr, 1, dim, SamplerKind::UniformReject, ks.to_vec()).unwrap()
}

fn random_model(users: usize, items: usize, dim: usize, seed: u64) -> ModelParams<f64> {
    let mut r = rng(seed);
    ModelParams::new(
        gaussian_matrix(users, dim, 1.0, &mut r),
        gaussian_matrix(items, dim, 1.0, &mut r),
    )
    .unwrap()
}

#[test]
fn matches_single_user_loop_reference() {
    let mut r = rng(21);
    let split = random_split(50, 200, 25, 5, &mut r);
    let params = random_model(50, 200, 8, 22);
    let c = ctx(8, &[1, 5, 20]);
    let rec = evaluate(&EvalRequest::new("m", &params, &split, &c)).unwrap();
    for &k in c.k_list() {
        let (mut n, mut rc, mut p) = (0.0, 0.0, 0.0);
        for u in 0..50 {
            let truth: HashSet<u32> = split.test().row(u).iter().copied().collect();
            let ranked: Vec<u32> = naive_top_k(&params.item_emb, params.user_emb.row(u), split.train().row(u), k)
                .into_iter()
                .map(|x| x.0)
                .collect();
            n += ref_ndcg(&ranked, &truth, k);
            rc += ref_recall(&ranked, &truth, k);
            p += ref_precision(&ranked, &truth, k);
        }
        assert!((rec.score(MetricId::Ndcg, k).unwrap() - n / 50.0).abs() < 1e-12);
        assert!((rec.score(MetricId::Recall, k).unwrap() - rc / 50.0).abs() < 1e-12);
        assert!((rec.score(MetricId::Precision, k).unwrap() - p / 50.0).abs() < 1e-12);
    }
    assert_eq!(rec.ctx_fingerprint, c.fingerprint());
}

#[test]
fn dot_scorer_is_bit_identical() {
    let mut r = rng(23);
    let split = random_split(90, 150, 20, 4, &mut r);
    let params = random_model(90, 150, 6, 24);
    let c = ctx(6, &[3, 10]);
    let a = evaluate(&EvalRequest::new("m", &params, &split, &c).with_batch_size(13)).unwrap();
    let b = evaluate_with_scorer(
        "m",
        |users: &[u32]| {
            let mut m = Matrix::zeros(users.len(), 150);
            for (row, &u) in users.iter().enumerate() {
                for i in 0..150 {
                    m.row_mut(row)[i] = dot(params.user_emb.row(u as usize), params.item_emb.row(i));
                }
            }
            m
        },
        &split,
        &c,
        31,
        true,
    )
    .unwrap();
    assert_eq!(a.metrics, b.metrics);
    assert_eq!(a.evaluated_users, b.evaluated_users);
}

#[test]
fn random_scorer_matches_materialized_matrix() {
    let mut r = rng(25);
    let split = random_split(40, 60, 12, 3, &mut r);
    let scores: Vec<Vec<f64>> = (0..40).map(|_| (0..60).map(|_| r.random_range(0..5) as f64).collect()).collect();
    let c = ctx(2, &[4]);
    let rec = evaluate_with_scorer(
        "rand",
        |users: &[u32]| Matrix::from_rows(&users.iter().map(|&u| scores[u as usize].clone()).collect::<Vec<_>>()).unwrap(),
        &split,
        &c,
        9,
        true,
    )
    .unwrap();
    let mut total = 0.0;
    for u in 0..40 {
        let train: HashSet<u32> = split.train().row(u).iter().copied().collect();
        let mut order: Vec<u32> = (0..60u32).filter(|i| !train.contains(i)).collect();
        order.sort_by(|&a, &b| scores[u][b as usize].partial_cmp(&scores[u][a as usize]).unwrap().then(a.cmp(&b)));
        let truth: HashSet<u32> = split.test().row(u).iter().copied().collect();
        total += ref_ndcg(&order, &truth, 4);
    }
    assert!((rec.score(MetricId::Ndcg, 4).unwrap() - total / 40.0).abs() < 1e-12);
}

#[test]
fn planted_training_items_never_count() {
    // training items get the highest possible scores, everything else ties
    let mut r = rng(26);
    let split = random_split(30, 80, 10, 2, &mut r);
    let (users, items) = (30, 80);
    let mut ue = Matrix::<f64>::zeros(users, items);
    let mut ie = Matrix::<f64>::zeros(items, items);
    for i in 0..items {
        ie.row_mut(i)[i] = 1.0;
    }
    for u in 0..users {
        for &i in split.train().row(u) {
            ue.row_mut(u)[i as usize] = f64::MAX.sqrt();
        }
    }
    let params = ModelParams::new(ue, ie).unwrap();
    let c = ctx(items, &[8]);
    let masked = evaluate(&EvalRequest::new("m", &params, &split, &c)).unwrap();
    // the masked ranking is the all-tie order over non-training items
    let mut total = 0.0;
    for u in 0..users {
        let train: HashSet<u32> = split.train().row(u).iter().copied().collect();
        let order: Vec<u32> = (0..items as u32).filter(|i| !train.contains(i)).collect();
        let truth: HashSet<u32> = split.test().row(u).iter().copied().collect();
        total += ref_recall(&order, &truth, 8);
    }
    assert!((masked.score(MetricId::Recall, 8).unwrap() - total / users as f64).abs() < 1e-12);
}

#[test]
fn no_mask_variant_ranks_training_items() {
    let train = InteractionStore::from_pairs(1, 4, [(0, 0)]).unwrap();
    let test = InteractionStore::from_pairs(1, 4, [(0, 1)]).unwrap();
    let split = build_split(train, test).unwrap();
    let params = ModelParams::new(
        Matrix::from_rows(&[vec![1.0]]).unwrap(),
        Matrix::from_rows(&[vec![4.0], vec![3.0], vec![2.0], vec![1.0]]).unwrap(),
    )
    .unwrap();
    let c = ctx(1, &[1]);
    let masked = evaluate(&EvalRequest::new("m", &params, &split, &c)).unwrap();
    assert_eq!(masked.score(MetricId::Ndcg, 1), Some(1.0));
    let mut req = EvalRequest::new("m", &params, &split, &c);
    req.mask_train = false;
    assert_eq!(evaluate(&req).unwrap().score(MetricId::Ndcg, 1), Some(0.0));
}

#[test]
fn empty_test_users_are_not_counted() {
    let train = InteractionStore::from_pairs(3, 4, [(0, 0), (1, 1), (2, 2)]).unwrap();
    let test = InteractionStore::from_pairs(3, 4, [(0, 3), (2, 3)]).unwrap();
    let split = build_split(train, test).unwrap();
    let params = random_model(3, 4, 2, 27);
    let report = evaluate_report(&EvalRequest::new("m", &params, &split, &ctx(2, &[2]))).unwrap();
    assert_eq!(report.evaluated_users, 2);
    assert!(report.entries.iter().all(|e| e.users == 2));
}

#[test]
fn dimension_and_batch_errors() {
    let mut r = rng(28);
    let split = random_split(5, 9, 4, 1, &mut r);
    let params = random_model(5, 8, 2, 29);
    let c = ctx(2, &[2]);
    assert!(matches!(evaluate(&EvalRequest::new("m", &params, &split, &c)), Err(EvalError::Dimension(_))));
    let params = random_model(5, 9, 2, 29);
    assert!(matches!(
        evaluate(&EvalRequest::new("m", &params, &split, &c).with_batch_size(0)),
        Err(EvalError::ZeroBatch)
    ));
    let nan = evaluate_with_scorer("m", |u: &[u32]| {
        let mut m = Matrix::<f64>::zeros(u.len(), 9);
        m.row_mut(0)[0] = f64::NAN;
        m
    }, &split, &c, 2, true);
    assert!(matches!(nan, Err(EvalError::Contract(_))));
}

#[test]
fn aggregation_is_concatenation_invariant() {
    let mut r = rng(30);
    let ks = [1, 5, 10];
    let mut parts = Vec::new();
    for _ in 0..40 {
        let mut p = PartialSums::new(&ks);
        for _ in 0..r.random_range(0..20) {
            let ranked: Vec<u32> = rand::seq::index::sample(&mut r, 50, 10).into_iter().map(|x| x as u32).collect();
            let n = r.random_range(1..6);
            let mut truth: Vec<u32> = rand::seq::index::sample(&mut r, 50, n).into_iter().map(|x| x as u32).collect();
            truth.sort_unstable();
            p.add_user(&ranked, GroundTruth::new(&truth));
        }
        parts.push(p);
    }
    let all = aggregate(&parts).unwrap();
    let cut = 17;
    let fold = |ps: &[PartialSums]| {
        let mut acc = PartialSums::new(&ks);
        for p in ps {
            acc.merge(p).unwrap();
        }
        acc
    };
    let two = aggregate(&[fold(&parts[..cut]), fold(&parts[cut..])]).unwrap();
    for (a, b) in all.entries.iter().zip(&two.entries) {
        assert!((a.mean - b.mean).abs() < 1e-12);
        assert_eq!(a.users, b.users);
    }
    let mut reversed = parts.clone();
    reversed.reverse();
    let rev = aggregate(&reversed).unwrap();
    for (a, b) in all.entries.iter().zip(&rev.entries) {
        assert!((a.mean - b.mean).abs() < 1e-12);
    }
    // a single batch is its own mean
    let one = aggregate(&parts[..1]).unwrap();
    if parts[0].users > 0 {
        assert!((one.entries[0].mean - parts[0].sums[0].value() / parts[0].users as f64).abs() < 1e-15);
    }
}

#[test]
fn f32_embeddings_accumulate_in_f64() {
    let mut r = rng(31);
    let split = random_split(120, 90, 15, 3, &mut r);
    let p64 = random_model(120, 90, 4, 32);
    let p32: ModelParams<f32> = p64.cast();
    let c = ctx(4, &[10]);
    let a = evaluate(&EvalRequest::new("m", &p32, &split, &c).with_batch_size(7)).unwrap();
    let b = evaluate(&EvalRequest::new("m", &p32, &split, &c).with_batch_size(120)).unwrap();
    for (x, y) in a.metrics.iter().zip(&b.metrics) {
        assert!((x.value - y.value).abs() < 1e-12);
    }
}
