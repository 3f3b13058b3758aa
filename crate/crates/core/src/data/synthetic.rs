use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{build_split, DataError, InteractionStore, Split};

/// Seeded low-rank implicit-feedback generator, named on the command line as
/// `synthetic:<users>x<items>:rank<r>:seed<s>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SyntheticSpec {
    pub users: usize,
    pub items: usize,
    pub rank: usize,
    pub seed: u64,
}

pub const SYNTHETIC_PREFIX: &str = "synthetic:";

impl fmt::Display for SyntheticSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "synthetic:{}x{}:rank{}:seed{}",
            self.users, self.items, self.rank, self.seed
        )
    }
}

impl FromStr for SyntheticSpec {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || {
            DataError::InvalidDescriptor(format!(
                "`{s}` is not of the form synthetic:<users>x<items>:rank<r>:seed<s>"
            ))
        };
        let rest = s.strip_prefix(SYNTHETIC_PREFIX).ok_or_else(bad)?;
        let parts: Vec<&str> = rest.split(':').collect();
        let [dims, rank, seed] = parts.as_slice() else {
            return Err(bad());
        };
        let (users, items) = dims.split_once('x').ok_or_else(bad)?;
        let spec = SyntheticSpec {
            users: users.parse().map_err(|_| bad())?,
            items: items.parse().map_err(|_| bad())?,
            rank: rank
                .strip_prefix("rank")
                .and_then(|r| r.parse().ok())
                .ok_or_else(bad)?,
            seed: seed
                .strip_prefix("seed")
                .and_then(|r| r.parse().ok())
                .ok_or_else(bad)?,
        };
        if spec.users == 0 || spec.items < 2 || spec.rank == 0 {
            return Err(DataError::InvalidDescriptor(format!(
                "`{s}` needs users >= 1, items >= 2, rank >= 1"
            )));
        }
        Ok(spec)
    }
}

impl SyntheticSpec {
    /// Each user interacts with the items that score highest under a random
    /// rank-`rank` model perturbed by Gumbel noise; a fifth of each user's
    /// items (at least one when the user has two or more) goes to test.
    pub fn generate(&self) -> Result<Split, DataError> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let r = self.rank;
        let normal = |rng: &mut ChaCha8Rng| -> f64 { StandardNormal.sample(rng) };
        let user_f: Vec<f64> = (0..self.users * r).map(|_| normal(&mut rng)).collect();
        let item_f: Vec<f64> = (0..self.items * r).map(|_| normal(&mut rng)).collect();
        let scale = 1.0 / (r as f64).sqrt();

        let lo = (self.items / 50).max(2).min(self.items);
        let hi = (self.items / 12).max(lo);
        let mut train_rows = Vec::with_capacity(self.users);
        let mut test_rows = Vec::with_capacity(self.users);
        let mut scored: Vec<(f64, u32)> = Vec::with_capacity(self.items);
        for u in 0..self.users {
            let n = rng.random_range(lo..=hi);
            let uf = &user_f[u * r..(u + 1) * r];
            scored.clear();
            for i in 0..self.items {
                let vf = &item_f[i * r..(i + 1) * r];
                let affinity: f64 = uf.iter().zip(vf).map(|(a, b)| a * b).sum::<f64>() * scale;
                let uniform: f64 = rng.random_range(f64::EPSILON..1.0);
                let gumbel = -(-uniform.ln()).ln();
                scored.push((3.0 * affinity + gumbel, i as u32));
            }
            scored.sort_unstable_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            let mut chosen: Vec<u32> = scored[..n].iter().map(|&(_, i)| i).collect();
            chosen.shuffle(&mut rng);
            let n_test = if n >= 2 { (n / 5).max(1) } else { 0 };
            test_rows.push(chosen[..n_test].to_vec());
            train_rows.push(chosen[n_test..].to_vec());
        }
        build_split(
            InteractionStore::from_rows(train_rows, self.items)?,
            InteractionStore::from_rows(test_rows, self.items)?,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_display() {
        let s: SyntheticSpec = "synthetic:200x300:rank8:seed7".parse().unwrap();
        assert_eq!(
            s,
            SyntheticSpec {
                users: 200,
                items: 300,
                rank: 8,
                seed: 7
            }
        );
        assert_eq!(s.to_string(), "synthetic:200x300:rank8:seed7");
        for bad in ["synthetic:200:rank8:seed7", "synthetic:0x3:rank1:seed1", "yelp2018"] {
            assert!(bad.parse::<SyntheticSpec>().is_err(), "{bad}");
        }
    }

    #[test]
    fn deterministic_and_well_formed() {
        let spec: SyntheticSpec = "synthetic:50x120:rank4:seed3".parse().unwrap();
        let a = spec.generate().unwrap();
        assert_eq!(a, spec.generate().unwrap());
        assert_eq!(a.num_users(), 50);
        assert_eq!(a.num_items(), 120);
        for u in 0..50 {
            assert!(a.train().user_degree(u) >= 1);
            assert!(a.test().user_degree(u) >= 1);
        }
    }
}
