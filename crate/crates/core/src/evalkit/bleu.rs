use std::collections::HashMap;
use std::hash::Hash;

pub const MAX_ORDER: usize = 4;

fn ngram_counts<T: Hash + Eq>(tokens: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for g in tokens.windows(n) {
            *counts.entry(g).or_default() += 1;
        }
    }
    counts
}

/// Clipped matches and total candidate n-grams for orders 1..=4.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct BleuStats {
    pub matches: [usize; MAX_ORDER],
    pub totals: [usize; MAX_ORDER],
    pub candidate_len: usize,
    pub reference_len: usize,
}

impl BleuStats {
    /// Statistics of one candidate against its references. Matches are
    /// clipped by the largest count in any single reference; the reference
    /// length is the one closest to the candidate, shorter on ties.
    pub fn sentence<T: Hash + Eq>(candidate: &[T], references: &[&[T]]) -> Self {
        let mut s = BleuStats {
            candidate_len: candidate.len(),
            ..Default::default()
        };
        s.reference_len = references
            .iter()
            .map(|r| r.len())
            .min_by_key(|&l| (l.abs_diff(candidate.len()), l))
            .unwrap_or(0);
        for n in 1..=MAX_ORDER {
            let cand = ngram_counts(candidate, n);
            let mut max_ref: HashMap<&[T], usize> = HashMap::new();
            for r in references {
                for (g, c) in ngram_counts(r, n) {
                    let e = max_ref.entry(g).or_default();
                    *e = (*e).max(c);
                }
            }
            s.matches[n - 1] = cand
                .iter()
                .map(|(g, &c)| c.min(max_ref.get(g).copied().unwrap_or(0)))
                .sum();
            s.totals[n - 1] = candidate.len().saturating_sub(n - 1);
        }
        s
    }

    pub fn add(&mut self, other: &BleuStats) {
        for n in 0..MAX_ORDER {
            self.matches[n] += other.matches[n];
            self.totals[n] += other.totals[n];
        }
        self.candidate_len += other.candidate_len;
        self.reference_len += other.reference_len;
    }

    /// Modified precision of order `n` (1-based); a zero match count becomes
    /// `1 / (total + 1)`.
    pub fn precision(&self, n: usize) -> f64 {
        let (m, t) = (self.matches[n - 1], self.totals[n - 1]);
        if m == 0 {
            1.0 / (t as f64 + 1.0)
        } else {
            m as f64 / t as f64
        }
    }

    pub fn brevity_penalty(&self) -> f64 {
        let (c, r) = (self.candidate_len as f64, self.reference_len as f64);
        if c > r {
            1.0
        } else {
            (1.0 - r / c).exp()
        }
    }

    /// BLEU-4 on a 0–100 scale; 0 for an empty candidate side.
    pub fn score(&self) -> f64 {
        if self.candidate_len == 0 {
            return 0.0;
        }
        let log_p: f64 = (1..=MAX_ORDER).map(|n| self.precision(n).ln()).sum::<f64>() / MAX_ORDER as f64;
        100.0 * self.brevity_penalty() * log_p.exp()
    }
}

/// Corpus BLEU-4: statistics summed over all candidates before combining.
pub fn corpus_bleu<T: Hash + Eq>(candidates: &[&[T]], references: &[Vec<&[T]>]) -> f64 {
    assert_eq!(candidates.len(), references.len(), "one reference set per candidate");
    let mut total = BleuStats::default();
    for (c, refs) in candidates.iter().zip(references) {
        total.add(&BleuStats::sentence(c, refs));
    }
    total.score()
}

/// BLEU-4 of a single candidate.
pub fn bleu<T: Hash + Eq>(candidate: &[T], references: &[&[T]]) -> f64 {
    BleuStats::sentence(candidate, references).score()
}
