use super::optim::Gradients;
use super::{ModelError, ModelParams};
use crate::scalar::Scalar;

/// `ln(1 + e^x)` without overflow.
#[inline]
pub fn softplus<T: Scalar>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

#[inline]
pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Loss of one positive against one negative, with the partial derivatives
/// with respect to both scores.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairLoss<T> {
    pub loss: T,
    pub d_pos: T,
    pub d_neg: T,
}

/// Loss of one positive against a list of negatives.
#[derive(Debug, Clone, PartialEq)]
pub struct ListLoss<T> {
    pub loss: T,
    pub d_pos: T,
    pub d_negs: Vec<T>,
}

/// BPR: `softplus(s_neg - s_pos)`.
pub fn loss_bpr<T: Scalar>(s_pos: T, s_neg: T) -> PairLoss<T> {
    let x = s_neg - s_pos;
    let s = sigmoid(x);
    PairLoss {
        loss: softplus(x),
        d_pos: -s,
        d_neg: s,
    }
}

/// BCE with label 1 on the positive and 0 on every negative.
pub fn loss_bce<T: Scalar>(s_pos: T, s_negs: &[T]) -> ListLoss<T> {
    weighted_bce(s_pos, s_negs, T::one())
}

/// BCE whose positive term is scaled by `1 + gamma * beta_pos`; `gamma = 0`
/// is exactly [`loss_bce`].
pub fn loss_ultragcn<T: Scalar>(s_pos: T, s_negs: &[T], beta_pos: T, gamma: T) -> ListLoss<T> {
    weighted_bce(s_pos, s_negs, T::one() + gamma * beta_pos)
}

fn weighted_bce<T: Scalar>(s_pos: T, s_negs: &[T], pos_weight: T) -> ListLoss<T> {
    let mut loss = pos_weight * softplus(-s_pos);
    let d_pos = pos_weight * (sigmoid(s_pos) - T::one());
    let mut d_negs = Vec::with_capacity(s_negs.len());
    for &s in s_negs {
        loss += softplus(s);
        d_negs.push(sigmoid(s));
    }
    ListLoss { loss, d_pos, d_negs }
}

/// Degree-derived positive weight `(1/d_u) · sqrt((d_u + 1) / (d_i + 1))`.
pub fn ultragcn_weight(user_degree: usize, item_degree: usize) -> Result<f64, ModelError> {
    if user_degree == 0 {
        return Err(ModelError::DegenerateDegree);
    }
    let du = user_degree as f64;
    let di = item_degree as f64;
    Ok((1.0 / du) * ((du + 1.0) / (di + 1.0)).sqrt())
}

/// `lambda · Σ ‖row‖²` over the given rows; adds `2 · lambda · row` to the
/// matching gradient rows.
pub fn l2_penalty<T: Scalar>(
    params: &ModelParams<T>,
    users: &[u32],
    items: &[u32],
    lambda: T,
    grads: &mut Gradients<T>,
) -> T {
    if lambda == T::zero() {
        return T::zero();
    }
    let two_lambda = lambda + lambda;
    let mut penalty = T::zero();
    for &u in users {
        let row = params.user_emb.row(u as usize);
        penalty += row.iter().fold(T::zero(), |a, &v| a + v * v);
        crate::scalar::axpy(two_lambda, row, grads.user_row_mut(u as usize));
    }
    for &i in items {
        let row = params.item_emb.row(i as usize);
        penalty += row.iter().fold(T::zero(), |a, &v| a + v * v);
        crate::scalar::axpy(two_lambda, row, grads.item_row_mut(i as usize));
    }
    lambda * penalty
}
