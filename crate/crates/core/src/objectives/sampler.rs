use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Seeded epoch-wise shuffling sampler. Each epoch is a fresh permutation of
/// `0..n` cut into consecutive batches; the final batch of an epoch may be
/// short.
#[derive(Clone, Debug)]
pub struct BatchSampler {
    n: usize,
    batch_size: usize,
    seed: u64,
    epoch: u64,
    position: usize,
    order: Vec<usize>,
}

impl BatchSampler {
    pub fn new(n: usize, batch_size: usize, seed: u64) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be positive".into()));
        }
        if batch_size > n {
            return Err(Error::InvalidArgument(format!(
                "batch size {batch_size} exceeds the {n} available samples"
            )));
        }
        let mut sampler = Self {
            n,
            batch_size,
            seed,
            epoch: 0,
            position: 0,
            order: (0..n).collect(),
        };
        sampler.shuffle();
        Ok(sampler)
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    fn shuffle(&mut self) {
        // golden-ratio stride keeps per-epoch streams apart
        let epoch_seed = self
            .seed
            .wrapping_add(self.epoch.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let mut rng = ChaCha8Rng::seed_from_u64(epoch_seed);
        self.order.sort_unstable();
        self.order.shuffle(&mut rng);
    }

    pub fn next_batch(&mut self) -> Vec<usize> {
        if self.position >= self.n {
            self.epoch += 1;
            self.position = 0;
            self.shuffle();
        }
        let end = (self.position + self.batch_size).min(self.n);
        let batch = self.order[self.position..end].to_vec();
        self.position = end;
        batch
    }
}

/// Where an optimizer column gets its batches from.
#[derive(Clone, Debug)]
pub enum BatchSource {
    /// Every step uses the full index range `0..n` (empty for objectives that
    /// ignore batches).
    Full(usize),
    Stochastic(BatchSampler),
}

impl BatchSource {
    pub fn next_batch(&mut self) -> Vec<usize> {
        match self {
            BatchSource::Full(n) => (0..*n).collect(),
            BatchSource::Stochastic(s) => s.next_batch(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn partitions_each_epoch() {
        let mut s = BatchSampler::new(4, 2, 1).unwrap();
        let a = s.next_batch();
        let b = s.next_batch();
        assert_eq!(a.len(), 2);
        let mut all = [a, b].concat();
        all.sort();
        assert_eq!(all, vec![0, 1, 2, 3]);
    }

    #[test]
    fn short_final_batch() {
        let mut s = BatchSampler::new(5, 2, 3).unwrap();
        let sizes: Vec<usize> = (0..6).map(|_| s.next_batch().len()).collect();
        assert_eq!(sizes, vec![2, 2, 1, 2, 2, 1]);
        assert_eq!(s.epoch(), 1);
    }

    #[test]
    fn seeded_and_reshuffled() {
        let run = |seed| {
            let mut s = BatchSampler::new(50, 7, seed).unwrap();
            (0..40).map(|_| s.next_batch()).collect::<Vec<_>>()
        };
        assert_eq!(run(11), run(11));
        assert_ne!(run(11), run(12));
        let mut s = BatchSampler::new(50, 50, 5).unwrap();
        assert_ne!(s.next_batch(), s.next_batch(), "epochs should reshuffle");
    }

    #[test]
    fn rejects_oversized_batches() {
        assert!(BatchSampler::new(3, 4, 0).is_err());
        assert!(BatchSampler::new(3, 0, 0).is_err());
    }

    #[test]
    fn full_source() {
        assert_eq!(BatchSource::Full(3).next_batch(), vec![0, 1, 2]);
        assert!(BatchSource::Full(0).next_batch().is_empty());
    }

    proptest! {
        #[test]
        fn every_index_once_per_epoch(n in 1usize..200, batch in 1usize..64, seed: u64) {
            let batch = batch.min(n);
            let mut s = BatchSampler::new(n, batch, seed).unwrap();
            for _ in 0..2 {
                let mut seen = vec![0u32; n];
                let mut taken = 0;
                while taken < n {
                    let b = s.next_batch();
                    taken += b.len();
                    for i in b {
                        seen[i] += 1;
                    }
                }
                prop_assert_eq!(taken, n);
                prop_assert!(seen.iter().all(|&c| c == 1));
            }
        }
    }
}
