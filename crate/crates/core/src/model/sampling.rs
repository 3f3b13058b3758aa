use rand::Rng;

use super::ModelError;
use crate::context::SamplerKind;
use crate::data::InteractionStore;

/// Draws `n` negative items for `user`.
///
/// `UniformReject` rejects the user's training positives, giving up after
/// `100 * n` draws and finishing from the explicit complement. `UniformFree`
/// draws uniformly over all items.
pub fn sample_negatives<R: Rng + ?Sized>(
    train: &InteractionStore,
    user: usize,
    n: usize,
    kind: SamplerKind,
    rng: &mut R,
) -> Result<Vec<u32>, ModelError> {
    if user >= train.num_users() {
        return Err(ModelError::Index {
            what: "user",
            id: user,
            bound: train.num_users(),
        });
    }
    let num_items = train.num_items();
    if num_items == 0 {
        return Err(ModelError::Exhausted { user });
    }
    let mut out = Vec::with_capacity(n);
    match kind {
        SamplerKind::UniformFree => {
            out.extend((0..n).map(|_| rng.random_range(0..num_items) as u32));
        }
        SamplerKind::UniformReject => {
            let positives = train.row(user);
            if positives.len() >= num_items {
                return Err(ModelError::Exhausted { user });
            }
            let cap = 100 * n;
            let mut attempts = 0;
            while out.len() < n && attempts < cap {
                attempts += 1;
                let item = rng.random_range(0..num_items) as u32;
                if positives.binary_search(&item).is_err() {
                    out.push(item);
                }
            }
            if out.len() < n {
                let complement: Vec<u32> = (0..num_items as u32)
                    .filter(|i| positives.binary_search(i).is_err())
                    .collect();
                while out.len() < n {
                    out.push(complement[rng.random_range(0..complement.len())]);
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn store(s: &str, items: usize) -> InteractionStore {
        crate::data::parse_adjacency_list(s.as_bytes(), Some(items)).unwrap()
    }

    #[test]
    fn reject_only_returns_complement() {
        let train = store("0 0 1 2 3 4 5 6", 8);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let negs = sample_negatives(&train, 0, 1, SamplerKind::UniformReject, &mut rng).unwrap();
            assert_eq!(negs, vec![7]);
        }
        let many = sample_negatives(&train, 0, 1000, SamplerKind::UniformReject, &mut rng).unwrap();
        assert_eq!(many.len(), 1000);
        assert!(many.iter().all(|&i| i == 7));
    }

    #[test]
    fn fallback_path_after_cap() {
        // 1 free item out of 5000: 100 draws almost surely miss it
        let row: String = (0..4999).map(|i| format!(" {i}")).collect();
        let train = store(&format!("0{row}"), 5000);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let negs = sample_negatives(&train, 0, 1, SamplerKind::UniformReject, &mut rng).unwrap();
        assert_eq!(negs, vec![4999]);
    }

    #[test]
    fn exhausted_user() {
        let train = store("0 0 1 2", 3);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(
            sample_negatives(&train, 0, 1, SamplerKind::UniformReject, &mut rng),
            Err(ModelError::Exhausted { user: 0 })
        ));
        // free sampling does not reject
        assert!(sample_negatives(&train, 0, 1, SamplerKind::UniformFree, &mut rng).is_ok());
    }

    #[test]
    fn free_mode_is_uniform() {
        // 10^5 draws over 10 items: each count ~ Binomial(10^5, 0.1), sd = sqrt(9000) ≈ 94.87
        let train = store("0 1", 10);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let draws = sample_negatives(&train, 0, 100_000, SamplerKind::UniformFree, &mut rng).unwrap();
        let mut counts = [0usize; 10];
        for d in draws {
            counts[d as usize] += 1;
        }
        let sd = (100_000f64 * 0.1 * 0.9).sqrt();
        for c in counts {
            assert!((c as f64 - 10_000.0).abs() < 3.0 * sd, "{counts:?}");
        }
    }

    #[test]
    fn seeded_sequence_repeats() {
        let train = store("0 1 2\n1 3", 50);
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..20)
                .map(|k| sample_negatives(&train, k % 2, 3, SamplerKind::UniformReject, &mut rng).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(run(5), run(5));
        assert_ne!(run(5), run(6));
    }

    #[test]
    fn out_of_range_user() {
        let train = store("0 1", 4);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            sample_negatives(&train, 3, 1, SamplerKind::UniformFree, &mut rng),
            Err(ModelError::Index { .. })
        ));
    }
}
