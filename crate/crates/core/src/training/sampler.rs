use rand::seq::SliceRandom;

use super::stream_rng;

const SHUFFLE_TAG: u64 = 0x5348;

/// Endless shuffled stream of indices into one class's corpus. Every epoch
/// yields exactly `quota` distinct items, so with a shared quota both classes
/// contribute equally per epoch.
#[derive(Clone, Debug)]
pub struct ClassStream {
    size: usize,
    quota: usize,
    seed: u64,
    class: u64,
    epoch: u64,
    order: Vec<usize>,
    cursor: usize,
}

impl ClassStream {
    pub fn new(size: usize, quota: usize, seed: u64, class: u64) -> Self {
        assert!(quota >= 1 && quota <= size, "quota {quota} for {size} items");
        ClassStream {
            size,
            quota,
            seed,
            class,
            epoch: 0,
            order: Vec::new(),
            cursor: 0,
        }
    }

    /// Epochs started so far.
    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    fn refill(&mut self) {
        let mut rng = stream_rng(self.seed, SHUFFLE_TAG + self.class, self.epoch);
        let mut all: Vec<usize> = (0..self.size).collect();
        all.shuffle(&mut rng);
        all.truncate(self.quota);
        self.order = all;
        self.cursor = 0;
        self.epoch += 1;
    }

    /// Next `n` indices, starting a reshuffled epoch whenever one runs out.
    pub fn take(&mut self, n: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            if self.cursor == self.order.len() {
                self.refill();
            }
            let k = (n - out.len()).min(self.order.len() - self.cursor);
            out.extend_from_slice(&self.order[self.cursor..self.cursor + k]);
            self.cursor += k;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn epochs_have_equal_size_across_classes() {
        let (big, small) = (50, 12);
        let mut a = ClassStream::new(big, small, 3, 0);
        let mut b = ClassStream::new(small, small, 3, 1);
        let ea = a.take(small);
        let eb = b.take(small);
        assert_eq!(ea.len(), eb.len());
        assert_eq!(ea.iter().collect::<HashSet<_>>().len(), small);
        assert_eq!(eb.iter().collect::<HashSet<_>>().len(), small);
        assert_eq!((a.epoch(), b.epoch()), (1, 1));
    }

    #[test]
    fn majority_subsample_changes_between_epochs() {
        let mut a = ClassStream::new(100, 10, 1, 0);
        let e1: HashSet<_> = a.take(10).into_iter().collect();
        let e2: HashSet<_> = a.take(10).into_iter().collect();
        assert_ne!(e1, e2);
    }

    #[test]
    fn corpus_smaller_than_batch_wraps() {
        let mut s = ClassStream::new(3, 3, 0, 0);
        let batch = s.take(8);
        assert_eq!(batch.len(), 8);
        assert!(batch.iter().all(|&i| i < 3));
        assert_eq!(s.epoch(), 3);
    }

    #[test]
    fn same_seed_same_stream() {
        let mut a = ClassStream::new(40, 20, 9, 1);
        let mut b = ClassStream::new(40, 20, 9, 1);
        assert_eq!(a.take(55), b.take(55));
    }
}
