use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::scalar::Scalar;

/// Heap entry ordered so that the *worst* candidate is the maximum: lower
/// score is worse, and among equal scores the larger id is worse.
#[derive(Debug, Clone, Copy)]
struct Entry<T> {
    score: T,
    id: u32,
}

impl<T: Scalar> PartialEq for Entry<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<T: Scalar> Eq for Entry<T> {}

impl<T: Scalar> PartialOrd for Entry<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<T: Scalar> Ord for Entry<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .score
            .partial_cmp(&self.score)
            .unwrap_or(Ordering::Equal)
            .then(self.id.cmp(&other.id))
    }
}

/// Bounded selection of the `k` best `(score, id)` pairs: highest score
/// first, ties by ascending id. The result does not depend on insertion
/// order.
#[derive(Debug, Clone)]
pub(crate) struct TopK<T> {
    k: usize,
    heap: BinaryHeap<Entry<T>>,
}

impl<T: Scalar> TopK<T> {
    pub(crate) fn new(k: usize) -> Self {
        Self {
            k,
            heap: BinaryHeap::with_capacity(k + 1),
        }
    }

    #[inline]
    pub(crate) fn push(&mut self, score: T, id: u32) {
        if self.k == 0 {
            return;
        }
        let e = Entry { score, id };
        if self.heap.len() < self.k {
            self.heap.push(e);
        } else if let Some(mut worst) = self.heap.peek_mut() {
            if e < *worst {
                *worst = e;
            }
        }
    }

    pub(crate) fn len(&self) -> usize {
        self.heap.len()
    }

    /// `(ids, scores)` best first.
    pub(crate) fn into_sorted(self) -> (Vec<u32>, Vec<T>) {
        let sorted = self.heap.into_sorted_vec();
        sorted.into_iter().map(|e| (e.id, e.score)).unzip()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keeps_best_with_id_tiebreak() {
        let mut t = TopK::new(3);
        for (s, id) in [(1.0f64, 5), (3.0, 9), (3.0, 2), (0.5, 1), (2.0, 7), (3.0, 4)] {
            t.push(s, id);
        }
        assert_eq!(t.into_sorted(), (vec![2, 4, 9], vec![3.0, 3.0, 3.0]));

        let mut t = TopK::new(10);
        t.push(1.0f32, 3);
        t.push(2.0, 8);
        assert_eq!(t.len(), 2);
        assert_eq!(t.into_sorted(), (vec![8, 3], vec![2.0, 1.0]));
    }
}
