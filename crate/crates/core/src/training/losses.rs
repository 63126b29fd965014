use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{Bound, CaeModel};
use crate::numerics::{Tape, Var};
use crate::text::{control_code, corrupt, Attribute, NoiseConfig, TokenSequence, Vocabulary, EOS};

/// The attribute shared by every member of `batch`.
pub fn batch_attribute(batch: &[TokenSequence]) -> Result<Attribute> {
    let first = batch.first().ok_or(Error::EmptyInput)?.attribute;
    if batch.iter().any(|s| s.attribute != first) {
        return Err(Error::MixedAttributes);
    }
    Ok(first)
}

/// Teacher-forced reconstruction of each `x` from a corrupted copy, under `α(x)`.
pub fn dae_loss<R: Rng + ?Sized>(
    model: &CaeModel,
    tape: &mut Tape,
    bound: &Bound,
    batch: &[TokenSequence],
    vocab: &Vocabulary,
    noise: &NoiseConfig,
    rng: &mut R,
) -> Result<Var> {
    let attribute = batch_attribute(batch)?;
    let noisy: Vec<Vec<usize>> = batch
        .iter()
        .map(|s| corrupt(&s.ids, vocab.len(), noise, rng))
        .collect();
    let sources: Vec<&[usize]> = noisy.iter().map(Vec::as_slice).collect();
    let targets: Vec<&[usize]> = batch.iter().map(|s| s.ids.as_slice()).collect();
    model.reconstruction_loss(tape, bound, &sources, attribute, &targets, vocab)
}

/// Longest greedy output that still fits the decoder's positions.
pub fn pseudo_transfer_len(model: &CaeModel, vocab: &Vocabulary, max_len: usize) -> usize {
    let code = control_code(Attribute::First, vocab)
        .len()
        .max(control_code(Attribute::Second, vocab).len());
    max_len.min(model.config().max_positions - code)
}

/// Greedy rewrite of every member of `batch` into the opposite attribute.
/// Runs without a tape, so nothing here can receive a gradient.
pub fn pseudo_transfer(
    frozen: &CaeModel,
    batch: &[TokenSequence],
    vocab: &Vocabulary,
    max_len: usize,
) -> Result<Vec<Vec<usize>>> {
    let attribute = batch_attribute(batch)?;
    let inputs: Vec<&[usize]> = batch.iter().map(|s| s.ids.as_slice()).collect();
    let len = pseudo_transfer_len(frozen, vocab, max_len);
    let mut out = frozen.generate_batch(&inputs, attribute.other(), vocab, len)?;
    for y in out.iter_mut().filter(|y| y.is_empty()) {
        y.push(EOS);
    }
    Ok(out)
}

/// Reconstruction of each original from its pseudo-transfer, under `α(x)`.
/// `pseudo` is plain input data here.
pub fn back_transfer_loss(
    model: &CaeModel,
    tape: &mut Tape,
    bound: &Bound,
    pseudo: &[Vec<usize>],
    batch: &[TokenSequence],
    vocab: &Vocabulary,
) -> Result<Var> {
    let attribute = batch_attribute(batch)?;
    let sources: Vec<&[usize]> = pseudo.iter().map(Vec::as_slice).collect();
    let targets: Vec<&[usize]> = batch.iter().map(|s| s.ids.as_slice()).collect();
    model.reconstruction_loss(tape, bound, &sources, attribute, &targets, vocab)
}

/// Cycle-consistency loss: pseudo-transfer with `frozen`, then back-transfer
/// with the live parameters bound on `tape`. Returns the loss and the
/// pseudo-transfers.
#[allow(clippy::too_many_arguments)]
pub fn cc_loss(
    model: &CaeModel,
    frozen: &CaeModel,
    tape: &mut Tape,
    bound: &Bound,
    batch: &[TokenSequence],
    vocab: &Vocabulary,
    max_len: usize,
) -> Result<(Var, Vec<Vec<usize>>)> {
    let pseudo = pseudo_transfer(frozen, batch, vocab, max_len)?;
    let loss = back_transfer_loss(model, tape, bound, &pseudo, batch, vocab)?;
    Ok((loss, pseudo))
}
