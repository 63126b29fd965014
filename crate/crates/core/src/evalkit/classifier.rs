use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datapipe::Scorer;
use crate::error::{Error, Result};
use crate::model::transformer::linear;
use crate::model::{Bound, ParamStore};
use crate::numerics::{Segments, Tape, Tensor, Var};
use crate::text::{tokenize, Attribute, Vocabulary};
use crate::training::{Adam, AdamConfig, ClassStream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierConfig {
    pub d_model: usize,
    pub steps: u64,
    /// Sentences per attribute in each batch.
    pub batch_per_class: usize,
    pub learning_rate: f32,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            d_model: 32,
            steps: 600,
            batch_per_class: 16,
            learning_rate: 1e-2,
            seed: 0,
        }
    }
}

/// Mean of token embeddings followed by a two-way linear layer.
#[derive(Clone, Debug)]
pub struct Classifier {
    config: ClassifierConfig,
    vocab_size: usize,
    params: ParamStore,
}

const TOKENS: usize = 0;
const WEIGHT: usize = 1;
const BIAS: usize = 2;

impl Classifier {
    pub fn new(config: ClassifierConfig, vocab_size: usize) -> Result<Self> {
        if config.d_model == 0 || vocab_size == 0 {
            return Err(Error::Config("classifier dimensions must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = ParamStore::new();
        let d = config.d_model;
        params.normal("clf.tokens", &[vocab_size, d], 0.1, &mut rng);
        params.normal("clf.out.weight", &[d, 2], (1.0 / d as f32).sqrt(), &mut rng);
        params.filled("clf.out.bias", &[2], 0.0);
        Ok(Classifier {
            config,
            vocab_size,
            params,
        })
    }

    pub fn config(&self) -> &ClassifierConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub(crate) fn replace_params(&mut self, arrays: Vec<(String, Tensor)>) -> Result<()> {
        self.params.replace_all(arrays)
    }

    fn logits(&self, tape: &mut Tape, bound: &Bound, seqs: &[&[usize]]) -> Result<Var> {
        let lengths: Vec<usize> = seqs.iter().map(|s| s.len()).collect();
        if lengths.iter().any(|&l| l == 0) {
            return Err(Error::EmptyInput);
        }
        let ids: Vec<usize> = seqs.iter().flat_map(|s| s.iter().copied()).collect();
        let e = tape.embedding_lookup(bound.var(TOKENS), &ids)?;
        let pooled = tape.segment_mean(e, &Segments::from_lengths(&lengths))?;
        linear(tape, bound, pooled, WEIGHT, BIAS)
    }

    /// Fits on balanced batches from both corpora; returns per-step losses.
    pub fn train(&mut self, first: &[Vec<usize>], second: &[Vec<usize>]) -> Result<Vec<f32>> {
        if first.is_empty() || second.is_empty() {
            return Err(Error::Data("classifier needs sentences of both attributes".into()));
        }
        let adam = AdamConfig {
            learning_rate: self.config.learning_rate,
            ..Default::default()
        };
        let mut opt = Adam::new(adam, &self.params);
        let mut streams = [
            ClassStream::new(first.len(), first.len(), self.config.seed, 10),
            ClassStream::new(second.len(), second.len(), self.config.seed, 11),
        ];
        let mut losses = Vec::new();
        for _ in 0..self.config.steps {
            let mut batch: Vec<&[usize]> = Vec::new();
            let mut labels = Vec::new();
            for (class, corpus) in [first, second].iter().enumerate() {
                for i in streams[class].take(self.config.batch_per_class) {
                    batch.push(&corpus[i]);
                    labels.push(class);
                }
            }
            let mut tape = Tape::new();
            let bound = self.params.bind(&mut tape, true);
            let logits = self.logits(&mut tape, &bound, &batch)?;
            let loss = tape.softmax_cross_entropy(logits, &labels, usize::MAX)?;
            losses.push(tape.value(loss).item());
            let grads = tape.backward(loss)?;
            let flat: Vec<&[f32]> = bound.vars().iter().map(|&v| grads.get(v).expect("grad")).collect();
            opt.step(&mut self.params, &flat, 1.0)?;
        }
        Ok(losses)
    }

    /// Probability of the first attribute for each sequence.
    pub fn scores(&self, seqs: &[&[usize]]) -> Result<Vec<f32>> {
        if let Some(bad) = seqs.iter().flat_map(|s| s.iter()).find(|&&t| t >= self.vocab_size) {
            return Err(Error::Eval(format!("token {bad} outside the classifier vocabulary")));
        }
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape, false);
        let logits = self.logits(&mut tape, &bound, seqs)?;
        Ok(tape
            .value(logits)
            .data()
            .chunks(2)
            .map(|l| 1.0 / (1.0 + (l[1] - l[0]).exp()))
            .collect())
    }

    pub fn score(&self, seq: &[usize]) -> Result<f32> {
        Ok(self.scores(&[seq])?[0])
    }

    /// Hard label at the 0.5 threshold; exactly 0.5 counts as neither.
    pub fn label(&self, seq: &[usize]) -> Result<Option<Attribute>> {
        let s = self.score(seq)?;
        Ok(if s > 0.5 {
            Some(Attribute::First)
        } else if s < 0.5 {
            Some(Attribute::Second)
        } else {
            None
        })
    }
}

/// A classifier paired with the vocabulary it reads, usable to polarize raw text.
pub struct TextScorer<'a> {
    pub classifier: &'a Classifier,
    pub vocab: &'a Vocabulary,
    pub max_len: usize,
}

impl Scorer for TextScorer<'_> {
    fn name(&self) -> String {
        format!("mean-embedding classifier (d={})", self.classifier.config.d_model)
    }

    fn score(&self, text: &str) -> Result<f32> {
        self.classifier.score(&tokenize(text, self.vocab, self.max_len)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separates_marker_tokens() {
        // tokens 5..10 mark the first class, 10..15 the second, 15..40 are shared
        let mut first = Vec::new();
        let mut second = Vec::new();
        for i in 0..60usize {
            let c1 = 15 + i % 25;
            let c2 = 15 + (i * 7) % 25;
            first.push(vec![c1, 5 + i % 5, c2, 2]);
            second.push(vec![c2, 10 + i % 5, c1, 2]);
        }
        let cfg = ClassifierConfig {
            steps: 200,
            ..Default::default()
        };
        let mut clf = Classifier::new(cfg, 40).unwrap();
        let losses = clf.train(&first, &second).unwrap();
        assert!(losses.last().unwrap() < &losses[0]);
        for s in &first {
            assert_eq!(clf.label(s).unwrap(), Some(Attribute::First));
        }
        for s in &second {
            assert_eq!(clf.label(s).unwrap(), Some(Attribute::Second));
        }
        let scores = clf.scores(&[&first[0], &second[0]]).unwrap();
        assert!(scores.iter().all(|s| (0.0..=1.0).contains(s)));
    }
}
