//! Epoch batching: one seeded permutation per call, short final batch kept.

use crate::numerics::Rng;

use super::Dataset;

/// Index batches covering one epoch. The permutation is drawn from `rng`, so
/// feeding the same split stream reproduces the same order.
pub fn batch_iter(ds: &Dataset, batch: usize, rng: &mut Rng) -> Vec<Vec<usize>> {
    batch_indices(ds.len(), batch, rng)
}

pub fn batch_indices(n: usize, batch: usize, rng: &mut Rng) -> Vec<Vec<usize>> {
    assert!(batch >= 1, "batch size must be >= 1");
    let mut idx: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut idx);
    idx.chunks(batch).map(<[usize]>::to_vec).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn short_final_batch_kept() {
        let mut rng = Rng::new(0);
        let batches = batch_indices(10, 3, &mut rng);
        let sizes: Vec<usize> = batches.iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![3, 3, 3, 1]);
    }

    #[test]
    fn epoch_covers_every_index_once() {
        let mut rng = Rng::new(5);
        let batches = batch_indices(23, 4, &mut rng);
        let mut all: Vec<usize> = batches.into_iter().flatten().collect();
        all.sort_unstable();
        assert_eq!(all, (0..23).collect::<Vec<_>>());
    }

    #[test]
    fn same_seed_same_order() {
        let a = batch_indices(50, 7, &mut Rng::new(3));
        let b = batch_indices(50, 7, &mut Rng::new(3));
        assert_eq!(a, b);
    }
}
