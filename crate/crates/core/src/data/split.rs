use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DataError, InteractionStore};

/// Train and test halves over one shared id space, with no pair in both.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    train: InteractionStore,
    test: InteractionStore,
}

impl Split {
    pub fn train(&self) -> &InteractionStore {
        &self.train
    }

    pub fn test(&self) -> &InteractionStore {
        &self.test
    }

    pub fn num_users(&self) -> usize {
        self.train.num_users()
    }

    pub fn num_items(&self) -> usize {
        self.train.num_items()
    }

    pub fn into_parts(self) -> (InteractionStore, InteractionStore) {
        (self.train, self.test)
    }
}

/// Unifies the id spaces of `train` and `test` and rejects leakage.
pub fn build_split(train: InteractionStore, test: InteractionStore) -> Result<Split, DataError> {
    let users = train.num_users().max(test.num_users());
    let items = train.num_items().max(test.num_items());
    let train = train.with_dims(users, items)?;
    let test = test.with_dims(users, items)?;

    let mut leaked = Vec::new();
    for u in 0..users {
        let (a, b) = (train.row(u), test.row(u));
        let (mut x, mut y) = (0, 0);
        while x < a.len() && y < b.len() {
            match a[x].cmp(&b[y]) {
                std::cmp::Ordering::Less => x += 1,
                std::cmp::Ordering::Greater => y += 1,
                std::cmp::Ordering::Equal => {
                    leaked.push((u as u32, a[x]));
                    x += 1;
                    y += 1;
                }
            }
        }
    }
    if !leaked.is_empty() {
        return Err(DataError::Leakage { pairs: leaked });
    }
    Ok(Split { train, test })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub users: usize,
    pub items: usize,
    /// Train plus test pairs.
    pub interactions: usize,
    pub train_interactions: usize,
    pub test_interactions: usize,
    pub density: f64,
}

impl DatasetStats {
    /// Density rounded to five decimals for display.
    pub fn density_display(&self) -> String {
        format!("{:.5}", self.density)
    }

    /// Density computed from the train half only.
    pub fn train_density(&self) -> f64 {
        self.train_interactions as f64 / (self.users as f64 * self.items as f64)
    }
}

impl fmt::Display for DatasetStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "users={} items={} interactions={} density={}",
            self.users,
            self.items,
            self.interactions,
            self.density_display()
        )
    }
}

pub fn stats(split: &Split) -> Result<DatasetStats, DataError> {
    let users = split.num_users();
    let items = split.num_items();
    if users == 0 || items == 0 {
        return Err(DataError::UndefinedDensity);
    }
    let train_interactions = split.train.num_interactions();
    let test_interactions = split.test.num_interactions();
    let interactions = train_interactions + test_interactions;
    Ok(DatasetStats {
        users,
        items,
        interactions,
        train_interactions,
        test_interactions,
        density: interactions as f64 / (users as f64 * items as f64),
    })
}

/// Moves a seeded random `fraction` of training pairs into a validation
/// store. A user never loses its last training pair.
pub fn holdout(
    train: &InteractionStore,
    fraction: f64,
    seed: u64,
) -> Result<(InteractionStore, InteractionStore), DataError> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(DataError::InvalidStore(format!(
            "holdout fraction {fraction} outside [0, 1)"
        )));
    }
    let mut pairs: Vec<(u32, u32)> = train.pairs().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pairs.shuffle(&mut rng);
    let target = (pairs.len() as f64 * fraction).round() as usize;
    let mut remaining: Vec<usize> = (0..train.num_users()).map(|u| train.user_degree(u)).collect();
    let mut keep = Vec::with_capacity(pairs.len());
    let mut held = Vec::with_capacity(target);
    for (u, i) in pairs {
        if held.len() < target && remaining[u as usize] > 1 {
            remaining[u as usize] -= 1;
            held.push((u, i));
        } else {
            keep.push((u, i));
        }
    }
    let users = train.num_users();
    let items = train.num_items();
    Ok((
        InteractionStore::from_pairs(users, items, keep)?,
        InteractionStore::from_pairs(users, items, held)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::parse_adjacency_list;

    fn store(s: &str) -> InteractionStore {
        parse_adjacency_list(s.as_bytes(), None).unwrap()
    }

    #[test]
    fn disjoint_split_ok() {
        let split = build_split(store("0 1 2\n1 3"), store("0 4\n1 0")).unwrap();
        assert_eq!(split.num_users(), 2);
        assert_eq!(split.num_items(), 5);
    }

    #[test]
    fn leakage_names_pair() {
        let err = build_split(store("3 12 13"), store("3 12\n0 1")).unwrap_err();
        match &err {
            DataError::Leakage { pairs } => assert_eq!(pairs, &vec![(3, 12)]),
            other => panic!("unexpected {other}"),
        }
        assert!(err.to_string().contains("(3, 12)"));
    }

    #[test]
    fn unifies_item_space() {
        let train = parse_adjacency_list("0 1".as_bytes(), Some(100)).unwrap();
        let test = parse_adjacency_list("0 2".as_bytes(), Some(90)).unwrap();
        let split = build_split(train, test).unwrap();
        assert_eq!(split.train().num_items(), 100);
        assert_eq!(split.test().num_items(), 100);
    }

    #[test]
    fn density_fixture() {
        let split = build_split(store("0 5 7"), store("1 5")).unwrap();
        let st = stats(&split).unwrap();
        assert_eq!((st.users, st.items, st.interactions), (2, 8, 3));
        assert_eq!(st.density, 3.0 / 16.0);
        assert_eq!(st.density * 16.0, 3.0);
        assert_eq!(st.density_display(), "0.18750");
    }

    #[test]
    fn zero_users_undefined() {
        let split = build_split(store(""), store("")).unwrap();
        assert!(matches!(stats(&split), Err(DataError::UndefinedDensity)));
    }

    #[test]
    fn holdout_keeps_every_user_nonempty() {
        let train = store("0 1 2 3 4 5 6 7 8 9\n1 3\n2 4 5");
        let (keep, held) = holdout(&train, 0.3, 9).unwrap();
        assert_eq!(keep.num_interactions() + held.num_interactions(), 12);
        assert_eq!(held.num_interactions(), 4);
        for u in 0..3 {
            assert!(keep.user_degree(u) >= 1);
            for &i in held.row(u) {
                assert!(train.contains(u, i) && !keep.contains(u, i));
            }
        }
        assert_eq!(holdout(&train, 0.3, 9).unwrap(), (keep, held));
    }
}
