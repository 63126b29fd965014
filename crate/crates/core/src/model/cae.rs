use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use super::params::{Bound, ParamStore};
use super::transformer::{self, StackCache, StackParams, StackRun};
use crate::error::{Error, Result};
use crate::numerics::{kernels, Segments, Tape, Tensor, Var};
use crate::text::{gamma, Attribute, Vocabulary, BOS, EOS, PAD};

#[derive(Clone, Debug)]
struct Layout {
    tok_emb: usize,
    enc_pos: usize,
    dec_pos: usize,
    encoder: StackParams,
    decoder: StackParams,
    latent_w: usize,
    latent_b: usize,
}

const EMBED_STD: f32 = 0.5;

fn build(config: &ModelConfig, seed: u64) -> (ParamStore, Layout) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (v, d, p) = (config.vocab_size, config.d_model, config.max_positions);
    let mut store = ParamStore::new();
    let tok_emb = store.normal("embed.tokens", &[v, d], EMBED_STD, &mut rng);
    let enc_pos = store.normal("encoder.positions", &[p, d], EMBED_STD, &mut rng);
    let encoder = transformer::add_stack(
        &mut store,
        "encoder",
        config.encoder_layers,
        d,
        config.d_ff,
        &mut rng,
    );
    let latent_w = store.normal("latent.weight", &[d, d], (1.0 / d as f32).sqrt(), &mut rng);
    let latent_b = store.filled("latent.bias", &[d], 0.0);
    let dec_pos = store.normal("decoder.positions", &[p, d], EMBED_STD, &mut rng);
    let decoder = transformer::add_stack(
        &mut store,
        "decoder",
        config.decoder_layers,
        d,
        config.d_ff,
        &mut rng,
    );
    let layout = Layout {
        tok_emb,
        enc_pos,
        dec_pos,
        encoder,
        decoder,
        latent_w,
        latent_b,
    };
    (store, layout)
}

/// Encoder output for a packed batch.
pub struct Encoded {
    /// `[N × d]` final encoder states of every row.
    pub hidden: Var,
    /// `[B × d]` latent code of every sequence.
    pub latent: Var,
    pub segments: Segments,
}

/// Decoder input and loss labels for reconstructing `target` under `attribute`.
///
/// The input is the control code, `BOS`, then `target` without its last
/// token; control-code positions are labelled `PAD` so the loss skips them.
pub fn teacher_forcing(
    attribute: Attribute,
    target: &[usize],
    vocab: &Vocabulary,
) -> (Vec<usize>, Vec<usize>) {
    let mut suffix = Vec::with_capacity(target.len());
    suffix.push(BOS);
    suffix.extend_from_slice(&target[..target.len().saturating_sub(1)]);
    let input = gamma(attribute, &suffix, vocab);
    let code_len = input.len() - suffix.len();
    let mut labels = vec![PAD; code_len];
    labels.extend_from_slice(target);
    (input, labels)
}

/// Encoder–decoder whose only channel from source to output is the latent
/// code `z`, added to every decoder input embedding. There is no cross
/// attention, and the output projection reuses the token embedding table.
#[derive(Clone, Debug)]
pub struct CaeModel {
    config: ModelConfig,
    params: ParamStore,
    layout: Layout,
}

impl CaeModel {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let (params, layout) = build(&config, seed);
        Ok(CaeModel {
            config,
            params,
            layout,
        })
    }

    /// Rebuilds a model from stored arrays, which must match the layout of `config`.
    pub fn from_arrays(config: ModelConfig, arrays: Vec<(String, Tensor)>) -> Result<Self> {
        let mut model = CaeModel::new(config, 0)?;
        model.params.replace_all(arrays)?;
        Ok(model)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn embedding(&self) -> &Tensor {
        self.params.get(self.layout.tok_emb)
    }

    /// The output projection. Tied: this is the embedding array itself.
    pub fn lm_head(&self) -> &Tensor {
        self.params.get(self.layout.tok_emb)
    }

    fn logit_scale(&self) -> f32 {
        1.0 / (self.config.d_model as f32).sqrt()
    }

    fn check_lengths(&self, seqs: &[&[usize]], extra: usize) -> Result<()> {
        for s in seqs {
            if s.is_empty() {
                return Err(Error::EmptyInput);
            }
            if s.len() + extra > self.config.max_positions {
                return Err(Error::SequenceTooLong {
                    len: s.len() + extra,
                    max: self.config.max_positions,
                });
            }
        }
        Ok(())
    }

    pub fn encode_on(&self, tape: &mut Tape, bound: &Bound, inputs: &[&[usize]]) -> Result<Encoded> {
        if inputs.is_empty() {
            return Err(Error::EmptyInput);
        }
        self.check_lengths(inputs, 0)?;
        let lay = &self.layout;
        let lengths: Vec<usize> = inputs.iter().map(|s| s.len()).collect();
        let segments = Segments::from_lengths(&lengths);
        let ids: Vec<usize> = inputs.iter().flat_map(|s| s.iter().copied()).collect();
        let tok = tape.embedding_lookup(bound.var(lay.tok_emb), &ids)?;
        let pos = tape.embedding_lookup(bound.var(lay.enc_pos), &segments.positions())?;
        let x = tape.add(tok, pos)?;
        let x = tape.dropout(x, self.config.dropout);
        let run = StackRun {
            segments: &segments,
            heads: self.config.heads,
            causal: false,
            dropout: self.config.dropout,
        };
        let hidden = transformer::stack_forward(tape, bound, &lay.encoder, x, &run)?;
        let first = tape.gather_rows(hidden, &segments.starts())?;
        let latent = transformer::linear(tape, bound, first, lay.latent_w, lay.latent_b)?;
        Ok(Encoded {
            hidden,
            latent,
            segments,
        })
    }

    /// Causal decoder over `decoder_inputs[i]` conditioned on row `i` of `latent`.
    pub fn decode_on(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        latent: Var,
        decoder_inputs: &[Vec<usize>],
    ) -> Result<Var> {
        let refs: Vec<&[usize]> = decoder_inputs.iter().map(Vec::as_slice).collect();
        self.check_lengths(&refs, 0)?;
        if tape.value(latent).rows() != decoder_inputs.len() {
            return Err(Error::shape(
                "decode",
                format!(
                    "{} latent rows for {} sequences",
                    tape.value(latent).rows(),
                    decoder_inputs.len()
                ),
            ));
        }
        let lay = &self.layout;
        let lengths: Vec<usize> = refs.iter().map(|s| s.len()).collect();
        let segments = Segments::from_lengths(&lengths);
        let ids: Vec<usize> = refs.iter().flat_map(|s| s.iter().copied()).collect();
        let tok = tape.embedding_lookup(bound.var(lay.tok_emb), &ids)?;
        let pos = tape.embedding_lookup(bound.var(lay.dec_pos), &segments.positions())?;
        let z = tape.gather_rows(latent, &segments.owners())?;
        let x = tape.add(tok, pos)?;
        let x = tape.add(x, z)?;
        let x = tape.dropout(x, self.config.dropout);
        let run = StackRun {
            segments: &segments,
            heads: self.config.heads,
            causal: true,
            dropout: self.config.dropout,
        };
        let h = transformer::stack_forward(tape, bound, &lay.decoder, x, &run)?;
        let h = tape.scale(h, self.logit_scale());
        tape.matmul_transpose_b(h, bound.var(lay.tok_emb))
    }

    /// Teacher-forced cross-entropy of `targets[i]` given `sources[i]` and `attribute`.
    pub fn reconstruction_loss(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        sources: &[&[usize]],
        attribute: Attribute,
        targets: &[&[usize]],
        vocab: &Vocabulary,
    ) -> Result<Var> {
        if sources.len() != targets.len() {
            return Err(Error::shape(
                "reconstruction_loss",
                format!("{} sources, {} targets", sources.len(), targets.len()),
            ));
        }
        let enc = self.encode_on(tape, bound, sources)?;
        let mut inputs = Vec::with_capacity(targets.len());
        let mut labels = Vec::new();
        for t in targets {
            if t.is_empty() {
                return Err(Error::EmptyInput);
            }
            let (inp, lab) = teacher_forcing(attribute, t, vocab);
            inputs.push(inp);
            labels.extend(lab);
        }
        let logits = self.decode_on(tape, bound, enc.latent, &inputs)?;
        tape.softmax_cross_entropy(logits, &labels, PAD)
    }

    /// Eval-mode encoder states `[L × d]` and latent code of one sequence.
    pub fn encode(&self, x: &[usize]) -> Result<(Tensor, Vec<f32>)> {
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape, false);
        let enc = self.encode_on(&mut tape, &bound, &[x])?;
        Ok((
            tape.value(enc.hidden).clone(),
            tape.value(enc.latent).data().to_vec(),
        ))
    }

    /// Eval-mode teacher-forced logits `[T × V]` for `target` under `attribute`.
    pub fn decode_train(
        &self,
        latent: &[f32],
        attribute: Attribute,
        target: &[usize],
        vocab: &Vocabulary,
    ) -> Result<Tensor> {
        if latent.len() != self.config.d_model {
            return Err(Error::shape(
                "decode_train",
                format!("latent of width {} for d_model {}", latent.len(), self.config.d_model),
            ));
        }
        if target.is_empty() {
            return Err(Error::EmptyInput);
        }
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape, false);
        let z = tape.constant(Tensor::new(vec![1, latent.len()], latent.to_vec())?);
        let (input, _) = teacher_forcing(attribute, target, vocab);
        let logits = self.decode_on(&mut tape, &bound, z, &[input])?;
        Ok(tape.value(logits).clone())
    }

    /// Greedy generation of `x` rewritten under `attribute`.
    ///
    /// Emits at most `max_len` tokens and stops after `EOS`; the result
    /// holds neither the control code nor `BOS`.
    pub fn generate(
        &self,
        x: &[usize],
        attribute: Attribute,
        vocab: &Vocabulary,
        max_len: usize,
    ) -> Result<Vec<usize>> {
        Ok(self
            .generate_batch(&[x], attribute, vocab, max_len)?
            .pop()
            .expect("one output per input"))
    }

    pub fn generate_batch(
        &self,
        xs: &[&[usize]],
        attribute: Attribute,
        vocab: &Vocabulary,
        max_len: usize,
    ) -> Result<Vec<Vec<usize>>> {
        if xs.is_empty() {
            return Ok(Vec::new());
        }
        let prompt = gamma(attribute, &[BOS], vocab);
        if max_len == 0 || prompt.len() + max_len - 1 > self.config.max_positions {
            return Err(Error::Config(format!(
                "generation length {max_len} does not fit {} decoder positions",
                self.config.max_positions
            )));
        }
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape, false);
        let enc = self.encode_on(&mut tape, &bound, xs)?;
        let latents = tape.value(enc.latent);
        Ok((0..xs.len())
            .map(|i| self.greedy_from_latent(latents.row(i), &prompt, max_len))
            .collect())
    }

    fn greedy_from_latent(&self, z: &[f32], prompt: &[usize], max_len: usize) -> Vec<usize> {
        let lay = &self.layout;
        let d = self.config.d_model;
        let emb = self.params.get(lay.tok_emb).data();
        let pos = self.params.get(lay.dec_pos).data();
        let mut cache = StackCache::new(self.config.decoder_layers);
        let feed = |id: usize, cache: &mut StackCache| {
            let p = cache.len();
            let x: Vec<f32> = (0..d)
                .map(|j| emb[id * d + j] + pos[p * d + j] + z[j])
                .collect();
            transformer::stack_step(&self.params, &lay.decoder, x, self.config.heads, cache)
        };
        let mut h = Vec::new();
        for &id in prompt {
            h = feed(id, &mut cache);
        }
        let mut out = Vec::with_capacity(max_len);
        loop {
            let logits =
                transformer::row_logits(emb, self.config.vocab_size, &h, self.logit_scale());
            let next = kernels::argmax(&logits);
            out.push(next);
            if next == EOS || out.len() == max_len {
                break;
            }
            h = feed(next, &mut cache);
        }
        out
    }
}
