use rand::Rng;
use serde::{Deserialize, Serialize};

use super::vocab::{NUM_RESERVED, SENTINEL};

/// Corruption rates of the denoising objective.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    /// Per-position selection probability.
    pub mask_prob: f32,
    /// Share of selected positions replaced by a random token instead of the sentinel.
    pub random_frac: f32,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            mask_prob: 0.15,
            random_frac: 0.10,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct NoiseStats {
    pub eligible: usize,
    pub selected: usize,
    pub randomized: usize,
}

/// Corrupts non-reserved positions; reserved ids (`EOS`, `PAD`, ...) pass through.
///
/// Length is preserved and the only reserved id ever written is `SENTINEL`.
pub fn corrupt<R: Rng + ?Sized>(
    ids: &[usize],
    vocab_size: usize,
    noise: &NoiseConfig,
    rng: &mut R,
) -> Vec<usize> {
    corrupt_with_stats(ids, vocab_size, noise, rng).0
}

pub fn corrupt_with_stats<R: Rng + ?Sized>(
    ids: &[usize],
    vocab_size: usize,
    noise: &NoiseConfig,
    rng: &mut R,
) -> (Vec<usize>, NoiseStats) {
    let mut stats = NoiseStats::default();
    if noise.mask_prob <= 0.0 {
        stats.eligible = ids.iter().filter(|&&i| i >= NUM_RESERVED).count();
        return (ids.to_vec(), stats);
    }
    let out = ids
        .iter()
        .map(|&id| {
            if id < NUM_RESERVED {
                return id;
            }
            stats.eligible += 1;
            if rng.gen::<f32>() >= noise.mask_prob {
                return id;
            }
            stats.selected += 1;
            if vocab_size > NUM_RESERVED && rng.gen::<f32>() < noise.random_frac {
                stats.randomized += 1;
                rng.gen_range(NUM_RESERVED..vocab_size)
            } else {
                SENTINEL
            }
        })
        .collect();
    (out, stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::vocab::{EOS, PAD};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_probability_is_identity() {
        let ids = vec![7, 8, 9, EOS];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let noise = NoiseConfig {
            mask_prob: 0.0,
            random_frac: 0.1,
        };
        assert_eq!(corrupt(&ids, 50, &noise, &mut rng), ids);
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let ids: Vec<usize> = (5..45).chain([EOS]).collect();
        let a = corrupt(&ids, 50, &NoiseConfig::default(), &mut ChaCha8Rng::seed_from_u64(4));
        let b = corrupt(&ids, 50, &NoiseConfig::default(), &mut ChaCha8Rng::seed_from_u64(4));
        assert_eq!(a, b);
    }

    #[test]
    fn reserved_positions_untouched_and_length_kept() {
        let ids = vec![PAD, 6, EOS, 9, PAD];
        let noise = NoiseConfig {
            mask_prob: 1.0,
            random_frac: 0.5,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let out = corrupt(&ids, 20, &noise, &mut rng);
            assert_eq!(out.len(), ids.len());
            assert_eq!((out[0], out[2], out[4]), (PAD, EOS, PAD));
            for &o in [out[1], out[3]].iter() {
                assert!(o == SENTINEL || o >= NUM_RESERVED);
            }
        }
    }
}
