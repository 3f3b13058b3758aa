use super::{ModelError, ModelParams};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

/// Gradient buffers shaped like [`ModelParams`], tracking which rows were
/// written since the last [`clear`](Gradients::clear).
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    pub user: Matrix<T>,
    pub item: Matrix<T>,
    touched_users: Vec<u32>,
    touched_items: Vec<u32>,
    user_mark: Vec<bool>,
    item_mark: Vec<bool>,
}

impl<T: Scalar> Gradients<T> {
    pub fn new(num_users: usize, num_items: usize, dim: usize) -> Self {
        Self {
            user: Matrix::zeros(num_users, dim),
            item: Matrix::zeros(num_items, dim),
            touched_users: Vec::new(),
            touched_items: Vec::new(),
            user_mark: vec![false; num_users],
            item_mark: vec![false; num_items],
        }
    }

    pub fn for_params(params: &ModelParams<T>) -> Self {
        Self::new(params.num_users(), params.num_items(), params.dim())
    }

    pub fn user_row_mut(&mut self, user: usize) -> &mut [T] {
        if !self.user_mark[user] {
            self.user_mark[user] = true;
            self.touched_users.push(user as u32);
        }
        self.user.row_mut(user)
    }

    pub fn item_row_mut(&mut self, item: usize) -> &mut [T] {
        if !self.item_mark[item] {
            self.item_mark[item] = true;
            self.touched_items.push(item as u32);
        }
        self.item.row_mut(item)
    }

    /// Marks every row as touched (dense gradients).
    pub fn touch_all(&mut self) {
        for u in 0..self.user_mark.len() {
            if !self.user_mark[u] {
                self.user_mark[u] = true;
                self.touched_users.push(u as u32);
            }
        }
        for i in 0..self.item_mark.len() {
            if !self.item_mark[i] {
                self.item_mark[i] = true;
                self.touched_items.push(i as u32);
            }
        }
    }

    pub fn touched_users(&self) -> &[u32] {
        &self.touched_users
    }

    pub fn touched_items(&self) -> &[u32] {
        &self.touched_items
    }

    /// Zeroes touched rows only.
    pub fn clear(&mut self) {
        for &u in &self.touched_users {
            self.user.row_mut(u as usize).iter_mut().for_each(|v| *v = T::zero());
            self.user_mark[u as usize] = false;
        }
        for &i in &self.touched_items {
            self.item.row_mut(i as usize).iter_mut().for_each(|v| *v = T::zero());
            self.item_mark[i as usize] = false;
        }
        self.touched_users.clear();
        self.touched_items.clear();
    }
}

/// First and second moment estimates for every embedding entry plus the
/// global step counter used for bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    m_user: Matrix<T>,
    v_user: Matrix<T>,
    m_item: Matrix<T>,
    v_item: Matrix<T>,
    step: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &ModelParams<T>) -> Self {
        let (u, i, d) = (params.num_users(), params.num_items(), params.dim());
        Self {
            m_user: Matrix::zeros(u, d),
            v_user: Matrix::zeros(u, d),
            m_item: Matrix::zeros(i, d),
            v_item: Matrix::zeros(i, d),
            step: 0,
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }
}

/// Sparse Adam: moments and parameters change only in rows the gradient
/// touched. Any non-finite gradient aborts before anything is modified.
pub fn adam_step<T: Scalar>(
    state: &mut AdamState<T>,
    params: &mut ModelParams<T>,
    grads: &Gradients<T>,
    lr: f64,
) -> Result<(), ModelError> {
    if state.m_user.rows() != params.num_users()
        || state.m_item.rows() != params.num_items()
        || state.m_user.cols() != params.dim()
        || grads.user.rows() != params.num_users()
        || grads.item.rows() != params.num_items()
        || grads.user.cols() != params.dim()
    {
        return Err(ModelError::Dimension(
            "optimizer state, gradients and parameters differ in shape".into(),
        ));
    }
    for &u in grads.touched_users() {
        if grads.user.row(u as usize).iter().any(|g| !g.is_finite()) {
            return Err(ModelError::PoisonedUpdate(format!("non-finite gradient in user {u}")));
        }
    }
    for &i in grads.touched_items() {
        if grads.item.row(i as usize).iter().any(|g| !g.is_finite()) {
            return Err(ModelError::PoisonedUpdate(format!("non-finite gradient in item {i}")));
        }
    }

    state.step += 1;
    let t = state.step as i32;
    let b1 = T::of(ADAM_BETA1);
    let b2 = T::of(ADAM_BETA2);
    let bc1 = T::one() - b1.powi(t);
    let bc2 = T::one() - b2.powi(t);
    let lr = T::of(lr);
    let eps = T::of(ADAM_EPSILON);

    let update = |p: &mut [T], m: &mut [T], v: &mut [T], g: &[T]| {
        for k in 0..p.len() {
            m[k] = b1 * m[k] + (T::one() - b1) * g[k];
            v[k] = b2 * v[k] + (T::one() - b2) * g[k] * g[k];
            let m_hat = m[k] / bc1;
            let v_hat = v[k] / bc2;
            p[k] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    };
    for &u in grads.touched_users() {
        let u = u as usize;
        update(
            params.user_emb.row_mut(u),
            state.m_user.row_mut(u),
            state.v_user.row_mut(u),
            grads.user.row(u),
        );
        if params.user_emb.row(u).iter().any(|v| !v.is_finite()) {
            return Err(ModelError::PoisonedUpdate(format!("user {u} became non-finite")));
        }
    }
    for &i in grads.touched_items() {
        let i = i as usize;
        update(
            params.item_emb.row_mut(i),
            state.m_item.row_mut(i),
            state.v_item.row_mut(i),
            grads.item.row(i),
        );
        if params.item_emb.row(i).iter().any(|v| !v.is_finite()) {
            return Err(ModelError::PoisonedUpdate(format!("item {i} became non-finite")));
        }
    }
    Ok(())
}
