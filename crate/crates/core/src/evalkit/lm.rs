use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::transformer::{self, StackParams, StackRun};
use crate::model::ParamStore;
use crate::numerics::{Segments, Tape, Tensor, Var};
use crate::text::{BOS, PAD};
use crate::training::{stream_rng, AdamConfig, Adam};

/// Next-token scorer over a fixed vocabulary. Every sequence is predicted
/// from an implicit `BOS`.
pub trait LanguageModel {
    fn vocab_size(&self) -> usize;

    /// `ln p(seq[t] | BOS, seq[..t])` for every position `t`.
    fn token_log_probs(&self, seq: &[usize]) -> Result<Vec<f64>>;
}

/// `exp(total NLL / predicted tokens)` over all sequences.
pub fn perplexity<S: AsRef<[usize]>>(sequences: &[S], lm: &dyn LanguageModel) -> Result<f64> {
    let mut nll = 0.0;
    let mut count = 0usize;
    for s in sequences {
        let lp = lm.token_log_probs(s.as_ref())?;
        nll -= lp.iter().sum::<f64>();
        count += lp.len();
    }
    if count == 0 {
        return Err(Error::Eval("perplexity of an empty set".into()));
    }
    Ok((nll / count as f64).exp())
}

/// Every token equally likely.
pub struct UniformLm {
    pub vocab_size: usize,
}

impl LanguageModel for UniformLm {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn token_log_probs(&self, seq: &[usize]) -> Result<Vec<f64>> {
        Ok(vec![-(self.vocab_size as f64).ln(); seq.len()])
    }
}

/// Fixed bigram table: `probs[prev][next]`, with `BOS` as the first `prev`.
pub struct BigramLm {
    pub probs: Vec<Vec<f64>>,
}

impl LanguageModel for BigramLm {
    fn vocab_size(&self) -> usize {
        self.probs.len()
    }

    fn token_log_probs(&self, seq: &[usize]) -> Result<Vec<f64>> {
        let mut prev = BOS;
        seq.iter()
            .map(|&t| {
                let p = self
                    .probs
                    .get(prev)
                    .and_then(|row| row.get(t))
                    .ok_or_else(|| Error::Eval(format!("token {t} outside the bigram table")))?;
                prev = t;
                Ok(p.ln())
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LmConfig {
    pub d_model: usize,
    pub d_ff: usize,
    pub heads: usize,
    pub layers: usize,
    pub max_positions: usize,
    pub steps: u64,
    pub batch_size: usize,
    pub learning_rate: f32,
    pub seed: u64,
}

impl Default for LmConfig {
    fn default() -> Self {
        LmConfig {
            d_model: 64,
            d_ff: 256,
            heads: 4,
            layers: 2,
            max_positions: 64,
            steps: 1500,
            batch_size: 32,
            learning_rate: 1e-3,
            seed: 0,
        }
    }
}

/// Small causal transformer LM with a tied output layer.
#[derive(Clone, Debug)]
pub struct FluencyLm {
    config: LmConfig,
    vocab_size: usize,
    params: ParamStore,
    tokens: usize,
    positions: usize,
    stack: StackParams,
}

impl FluencyLm {
    pub fn new(config: LmConfig, vocab_size: usize) -> Result<Self> {
        if config.d_model == 0 || config.heads == 0 || config.d_model % config.heads != 0 {
            return Err(Error::Config("LM d_model must be a positive multiple of heads".into()));
        }
        if config.layers == 0 || config.max_positions == 0 || vocab_size == 0 {
            return Err(Error::Config("LM dimensions must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = ParamStore::new();
        let d = config.d_model;
        let tokens = params.normal("lm.tokens", &[vocab_size, d], 0.5, &mut rng);
        let positions = params.normal("lm.positions", &[config.max_positions, d], 0.5, &mut rng);
        let stack = transformer::add_stack(&mut params, "lm", config.layers, d, config.d_ff, &mut rng);
        Ok(FluencyLm {
            config,
            vocab_size,
            params,
            tokens,
            positions,
            stack,
        })
    }

    pub fn config(&self) -> &LmConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub(crate) fn replace_params(&mut self, arrays: Vec<(String, Tensor)>) -> Result<()> {
        self.params.replace_all(arrays)
    }

    pub fn token_embeddings(&self) -> &Tensor {
        self.params.get(self.tokens)
    }

    /// Packed logits for predicting each sequence from `BOS`.
    fn logits(&self, tape: &mut Tape, bound: &crate::model::Bound, seqs: &[&[usize]]) -> Result<(Var, Vec<usize>)> {
        let mut inputs = Vec::new();
        let mut lengths = Vec::with_capacity(seqs.len());
        let mut labels = Vec::new();
        for s in seqs {
            if s.is_empty() {
                return Err(Error::EmptyInput);
            }
            if s.len() > self.config.max_positions {
                return Err(Error::SequenceTooLong {
                    len: s.len(),
                    max: self.config.max_positions,
                });
            }
            inputs.push(BOS);
            inputs.extend_from_slice(&s[..s.len() - 1]);
            labels.extend_from_slice(s);
            lengths.push(s.len());
        }
        let segments = Segments::from_lengths(&lengths);
        let tok = tape.embedding_lookup(bound.var(self.tokens), &inputs)?;
        let pos = tape.embedding_lookup(bound.var(self.positions), &segments.positions())?;
        let x = tape.add(tok, pos)?;
        let run = StackRun {
            segments: &segments,
            heads: self.config.heads,
            causal: true,
            dropout: 0.0,
        };
        let h = transformer::stack_forward(tape, bound, &self.stack, x, &run)?;
        let h = tape.scale(h, 1.0 / (self.config.d_model as f32).sqrt());
        Ok((tape.matmul_transpose_b(h, bound.var(self.tokens))?, labels))
    }

    /// Trains on the union of `corpora` with shuffled mini-batches.
    pub fn train(&mut self, corpus: &[Vec<usize>]) -> Result<Vec<f32>> {
        if corpus.is_empty() {
            return Err(Error::Data("empty LM training corpus".into()));
        }
        let adam = AdamConfig {
            learning_rate: self.config.learning_rate,
            ..Default::default()
        };
        let mut opt = Adam::new(adam, &self.params);
        let mut order: Vec<usize> = (0..corpus.len()).collect();
        let mut cursor = order.len();
        let mut epoch = 0;
        let mut losses = Vec::with_capacity(self.config.steps as usize);
        for _ in 0..self.config.steps {
            let mut batch = Vec::with_capacity(self.config.batch_size);
            while batch.len() < self.config.batch_size {
                if cursor == order.len() {
                    order.shuffle(&mut stream_rng(self.config.seed, 0x4c4d, epoch));
                    epoch += 1;
                    cursor = 0;
                }
                batch.push(corpus[order[cursor]].as_slice());
                cursor += 1;
            }
            let mut tape = Tape::new();
            let bound = self.params.bind(&mut tape, true);
            let (logits, labels) = self.logits(&mut tape, &bound, &batch)?;
            let loss = tape.softmax_cross_entropy(logits, &labels, PAD)?;
            losses.push(tape.value(loss).item());
            let grads = tape.backward(loss)?;
            let flat: Vec<&[f32]> = bound.vars().iter().map(|&v| grads.get(v).expect("grad")).collect();
            opt.step(&mut self.params, &flat, 1.0)?;
        }
        Ok(losses)
    }

    /// Full next-token distributions `[T × V]` for one sequence.
    pub fn distributions(&self, seq: &[usize]) -> Result<Tensor> {
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape, false);
        let (logits, _) = self.logits(&mut tape, &bound, &[seq])?;
        let mut t = tape.value(logits).clone();
        let v = self.vocab_size;
        for row in t.data_mut().chunks_mut(v) {
            crate::numerics::kernels::softmax_in_place(row);
        }
        Ok(t)
    }
}

impl LanguageModel for FluencyLm {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn token_log_probs(&self, seq: &[usize]) -> Result<Vec<f64>> {
        if let Some(&bad) = seq.iter().find(|&&t| t >= self.vocab_size) {
            return Err(Error::Eval(format!("token {bad} outside the LM vocabulary")));
        }
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape, false);
        let (logits, labels) = self.logits(&mut tape, &bound, &[seq])?;
        let l = tape.value(logits);
        Ok(labels
            .iter()
            .enumerate()
            .map(|(r, &t)| {
                let row = l.row(r);
                let max = row.iter().fold(f32::NEG_INFINITY, |a, &b| a.max(b)) as f64;
                let lse = max + row.iter().map(|&x| (x as f64 - max).exp()).sum::<f64>().ln();
                row[t] as f64 - lse
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_perplexity_is_vocab_size() {
        let lm = UniformLm { vocab_size: 37 };
        let seqs = vec![vec![5, 6, 2], vec![9, 2]];
        assert!((perplexity(&seqs, &lm).unwrap() - 37.0).abs() < 1e-9);
    }

    #[test]
    fn bigram_hand_example() {
        // V = 4; BOS = 1. p(3|BOS)=0.5, p(0|3)=0.25, p(2|0)=0.8
        let mut probs = vec![vec![0.25; 4]; 4];
        probs[1] = vec![0.1, 0.1, 0.3, 0.5];
        probs[3] = vec![0.25, 0.25, 0.25, 0.25];
        probs[0] = vec![0.1, 0.05, 0.8, 0.05];
        let lm = BigramLm { probs };
        let ppl = perplexity(&[vec![3, 0, 2]], &lm).unwrap();
        let expected = (-(0.5f64.ln() + 0.25f64.ln() + 0.8f64.ln()) / 3.0).exp();
        assert!((ppl - expected).abs() < 1e-12);
    }

    #[test]
    fn empty_set_is_an_error() {
        let lm = UniformLm { vocab_size: 3 };
        assert!(perplexity::<Vec<usize>>(&[], &lm).is_err());
    }

    fn tiny_lm(steps: u64) -> FluencyLm {
        let cfg = LmConfig {
            d_model: 16,
            d_ff: 32,
            heads: 2,
            layers: 2,
            max_positions: 16,
            steps,
            batch_size: 4,
            learning_rate: 3e-3,
            seed: 1,
        };
        FluencyLm::new(cfg, 12).unwrap()
    }

    #[test]
    fn distributions_sum_to_one() {
        let lm = tiny_lm(0);
        let d = lm.distributions(&[5, 6, 7, 2]).unwrap();
        for r in 0..d.rows() {
            let s: f32 = d.row(r).iter().sum();
            assert!((s - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn memorized_sentence_approaches_perplexity_one() {
        let mut lm = tiny_lm(300);
        let s = vec![5, 9, 7, 2];
        lm.train(&[s.clone()]).unwrap();
        let ppl = perplexity(&[s], &lm).unwrap();
        assert!(ppl < 1.05, "ppl {ppl}");
    }
}
