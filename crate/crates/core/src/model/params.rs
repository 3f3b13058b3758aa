use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::ModelError;
use crate::matrix::Matrix;
use crate::scalar::{dot, Scalar};

/// Standard deviation of the initial embedding entries.
pub const INIT_STD: f64 = 0.01;

/// User and item embedding tables with a shared dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub user_emb: Matrix<T>,
    pub item_emb: Matrix<T>,
}

impl<T: Scalar> ModelParams<T> {
    pub fn new(user_emb: Matrix<T>, item_emb: Matrix<T>) -> Result<Self, ModelError> {
        if user_emb.cols() != item_emb.cols() {
            return Err(ModelError::Dimension(format!(
                "user dim {} != item dim {}",
                user_emb.cols(),
                item_emb.cols()
            )));
        }
        Ok(Self { user_emb, item_emb })
    }

    pub fn num_users(&self) -> usize {
        self.user_emb.rows()
    }

    pub fn num_items(&self) -> usize {
        self.item_emb.rows()
    }

    pub fn dim(&self) -> usize {
        self.user_emb.cols()
    }

    pub fn is_finite(&self) -> bool {
        self.user_emb.is_finite() && self.item_emb.is_finite()
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        ModelParams {
            user_emb: self.user_emb.cast(),
            item_emb: self.item_emb.cast(),
        }
    }
}

/// I.i.d. normal(0, 0.01²) entries from a ChaCha8 stream seeded with `seed`;
/// user rows are drawn first.
pub fn init_params<T: Scalar>(
    num_users: usize,
    num_items: usize,
    dim: usize,
    seed: u64,
) -> Result<ModelParams<T>, ModelError> {
    if num_users == 0 || num_items == 0 || dim == 0 {
        return Err(ModelError::Dimension(format!(
            "cannot initialise {num_users} users x {num_items} items x dim {dim}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, INIT_STD).unwrap();
    let mut draw = |n: usize| -> Vec<T> { (0..n).map(|_| T::of(normal.sample(&mut rng))).collect() };
    let users = draw(num_users * dim);
    let items = draw(num_items * dim);
    Ok(ModelParams {
        user_emb: Matrix::from_vec(num_users, dim, users).unwrap(),
        item_emb: Matrix::from_vec(num_items, dim, items).unwrap(),
    })
}

pub fn score<T: Scalar>(params: &ModelParams<T>, user: usize, item: usize) -> Result<T, ModelError> {
    if user >= params.num_users() {
        return Err(ModelError::Index {
            what: "user",
            id: user,
            bound: params.num_users(),
        });
    }
    if item >= params.num_items() {
        return Err(ModelError::Index {
            what: "item",
            id: item,
            bound: params.num_items(),
        });
    }
    Ok(dot(params.user_emb.row(user), params.item_emb.row(item)))
}
