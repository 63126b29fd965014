use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Anything that rates a sentence with the probability of the first attribute.
pub trait Scorer {
    fn name(&self) -> String;
    fn score(&self, text: &str) -> Result<f32>;
}

impl<F: Fn(&str) -> f32> Scorer for (String, F) {
    fn name(&self) -> String {
        self.0.clone()
    }

    fn score(&self, text: &str) -> Result<f32> {
        Ok((self.1)(text))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredSentence {
    pub text: String,
    pub score: f32,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub dev: usize,
    pub test: usize,
}

impl SplitCounts {
    /// Dev and test sizes rounded from their fractions; train takes the rest.
    pub fn from_fractions(n: usize, dev: f64, test: f64) -> Result<Self> {
        if !(dev >= 0.0 && test >= 0.0 && dev + test < 1.0) {
            return Err(Error::Config(format!("split fractions dev={dev} test={test}")));
        }
        let dev = (n as f64 * dev).round() as usize;
        let test = (n as f64 * test).round() as usize;
        if dev + test >= n {
            return Err(Error::Data(format!("{n} sentences cannot fill a training split")));
        }
        Ok(SplitCounts {
            train: n - dev - test,
            dev,
            test,
        })
    }

    pub fn total(&self) -> usize {
        self.train + self.dev + self.test
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub attributes: [String; 2],
    pub scorer: String,
    pub hi: f32,
    pub lo: f32,
    pub input_sentences: usize,
    /// Retained sentences per attribute.
    pub counts: [usize; 2],
    pub discarded: usize,
    /// Train/dev/test sizes of each attribute file, in file order.
    pub splits: [SplitCounts; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<serde_json::Value>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolarizedCorpus {
    /// Scores above `hi`.
    pub first: Vec<ScoredSentence>,
    /// Scores below `lo`.
    pub second: Vec<ScoredSentence>,
    pub provenance: Provenance,
}

/// Keeps sentences scoring strictly above `hi` (first attribute) or strictly
/// below `lo` (second attribute), in input order; everything else is dropped.
pub fn polarize_scored(
    scored: Vec<ScoredSentence>,
    hi: f32,
    lo: f32,
    attributes: [&str; 2],
    scorer: &str,
) -> Result<PolarizedCorpus> {
    if !(hi > lo) {
        return Err(Error::Config(format!("thresholds need hi > lo, got hi={hi} lo={lo}")));
    }
    let input_sentences = scored.len();
    let (mut first, mut second) = (Vec::new(), Vec::new());
    for s in scored {
        if s.score > hi {
            first.push(s);
        } else if s.score < lo {
            second.push(s);
        }
    }
    if first.is_empty() || second.is_empty() {
        return Err(Error::InsufficientPolarity {
            toxic: first.len(),
            civil: second.len(),
        });
    }
    let counts = [first.len(), second.len()];
    let provenance = Provenance {
        attributes: attributes.map(str::to_string),
        scorer: scorer.to_string(),
        hi,
        lo,
        input_sentences,
        counts,
        discarded: input_sentences - counts[0] - counts[1],
        splits: counts.map(|n| SplitCounts {
            train: n,
            dev: 0,
            test: 0,
        }),
        seed: None,
        generator: None,
    };
    Ok(PolarizedCorpus {
        first,
        second,
        provenance,
    })
}

pub fn polarize(
    sentences: &[String],
    scorer: &dyn Scorer,
    hi: f32,
    lo: f32,
    attributes: [&str; 2],
) -> Result<PolarizedCorpus> {
    let scored = sentences
        .iter()
        .map(|s| {
            Ok(ScoredSentence {
                text: s.clone(),
                score: scorer.score(s)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    polarize_scored(scored, hi, lo, attributes, &scorer.name())
}

impl PolarizedCorpus {
    /// Records a train/dev/test partition of each side in file order.
    pub fn set_splits(&mut self, dev: f64, test: f64) -> Result<()> {
        self.provenance.splits = [
            SplitCounts::from_fractions(self.first.len(), dev, test)?,
            SplitCounts::from_fractions(self.second.len(), dev, test)?,
        ];
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scored(scores: &[f32]) -> Vec<ScoredSentence> {
        scores
            .iter()
            .enumerate()
            .map(|(i, &score)| ScoredSentence {
                text: format!("s{i}"),
                score,
            })
            .collect()
    }

    #[test]
    fn three_way_partition() {
        let p = polarize_scored(scored(&[0.95, 0.5, 0.05]), 0.9, 0.1, ["t", "c"], "x").unwrap();
        assert_eq!(p.first.len(), 1);
        assert_eq!(p.second.len(), 1);
        assert_eq!(p.provenance.discarded, 1);
    }

    #[test]
    fn thresholds_are_strict() {
        let p = polarize_scored(scored(&[0.9, 0.1, 0.91, 0.09]), 0.9, 0.1, ["t", "c"], "x").unwrap();
        assert_eq!(p.provenance.counts, [1, 1]);
        assert_eq!(p.provenance.discarded, 2);
        let p = polarize_scored(scored(&[0.5, 0.6, 0.4]), 0.5, 0.5 - f32::EPSILON, ["t", "c"], "x")
            .unwrap();
        assert_eq!(p.provenance.counts, [1, 1]);
    }

    #[test]
    fn one_empty_side_is_insufficient_polarity() {
        let err = polarize_scored(scored(&[0.95, 0.5]), 0.9, 0.1, ["t", "c"], "x").unwrap_err();
        assert!(matches!(err, Error::InsufficientPolarity { toxic: 1, civil: 0 }));
        assert!(polarize_scored(scored(&[0.95, 0.0]), 0.1, 0.9, ["t", "c"], "x").is_err());
    }

    #[test]
    fn scorer_trait_drives_polarize() {
        let s = ("len".to_string(), |t: &str| if t.len() > 3 { 1.0 } else { 0.0 });
        let sentences: Vec<String> = ["long one", "ab", "xyzzy"].iter().map(|s| s.to_string()).collect();
        let p = polarize(&sentences, &s, 0.9, 0.1, ["t", "c"]).unwrap();
        assert_eq!(p.provenance.scorer, "len");
        assert_eq!(p.first.len() + p.second.len() + p.provenance.discarded, 3);
    }

    #[test]
    fn split_counts_round_and_fill() {
        let s = SplitCounts::from_fractions(2000, 0.075, 0.125).unwrap();
        assert_eq!((s.train, s.dev, s.test), (1600, 150, 250));
        assert!(SplitCounts::from_fractions(2, 0.5, 0.5).is_err());
    }
}
