use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rand::Rng;

use super::checkpoint::save_checkpoint;
use super::config::TrainingConfig;
use super::losses::{cc_loss, dae_loss};
use super::optim::Adam;
use super::sampler::ClassStream;
use super::stream_rng;
use crate::error::{Error, Result};
use crate::model::CaeModel;
use crate::numerics::Tape;
use crate::text::{control_code, Attribute, TokenSequence, Vocabulary};

const NOISE_TAG: u64 = 0x4e;
const DROPOUT_TAG: u64 = 0x44;

/// Losses of one optimizer step. `step` counts completed steps, starting at 1.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepLosses {
    pub step: u64,
    pub dae: f32,
    pub cc: f32,
    pub total: f32,
}

impl StepLosses {
    pub fn log_line(&self) -> String {
        format!("{}\t{}\t{}\t{}", self.step, self.dae, self.cc, self.total)
    }
}

/// Attribute of the batch drawn at zero-based step `step`: even steps take
/// the first attribute, odd steps the second.
pub fn step_attribute(step: u64) -> Attribute {
    if step % 2 == 0 {
        Attribute::First
    } else {
        Attribute::Second
    }
}

/// One update of `model` on a single-attribute batch. `step` is the zero-based
/// index of this update and selects the noise and dropout streams.
pub fn train_step(
    model: &mut CaeModel,
    optimizer: &mut Adam,
    config: &TrainingConfig,
    vocab: &Vocabulary,
    batch: &[TokenSequence],
    step: u64,
) -> Result<StepLosses> {
    let mut noise_rng = stream_rng(config.seed, NOISE_TAG, step);
    let dropout_seed: u64 = stream_rng(config.seed, DROPOUT_TAG, step).gen();
    let mut tape = Tape::training(dropout_seed);
    let bound = model.params().bind(&mut tape, true);

    let mut parts = Vec::new();
    let mut dae = 0.0;
    if config.lambda_dae > 0.0 {
        let l = dae_loss(model, &mut tape, &bound, batch, vocab, &config.noise, &mut noise_rng)?;
        dae = tape.value(l).item();
        parts.push(tape.scale(l, config.lambda_dae));
    }
    let mut cc = 0.0;
    if config.lambda_cc > 0.0 {
        // the frozen snapshot is the model as it stands before this update
        let (l, _) = cc_loss(model, model, &mut tape, &bound, batch, vocab, config.max_len)?;
        cc = tape.value(l).item();
        parts.push(tape.scale(l, config.lambda_cc));
    }
    let mut total = parts[0];
    for &p in &parts[1..] {
        total = tape.add(total, p)?;
    }
    let total_value = tape.value(total).item();
    if !total_value.is_finite() {
        return Err(Error::NonFinite { step: step + 1, dae, cc });
    }
    let grads = tape.backward(total)?;
    let flat: Vec<&[f32]> = bound
        .vars()
        .iter()
        .map(|&v| grads.get(v).expect("trainable parameter without gradient"))
        .collect();
    optimizer.set_learning_rate(config.learning_rate_at(step));
    optimizer.step(model.params_mut(), &flat, config.clip_norm)?;
    Ok(StepLosses {
        step: step + 1,
        dae,
        cc,
        total: total_value,
    })
}

/// Training state: live parameters, optimizer moments, batch streams and history.
#[derive(Debug)]
pub struct Trainer {
    model: CaeModel,
    optimizer: Adam,
    config: TrainingConfig,
    vocab: Vocabulary,
    corpora: [Vec<Vec<usize>>; 2],
    streams: [ClassStream; 2],
    history: Vec<StepLosses>,
}

impl Trainer {
    /// `first` and `second` are token ids (with `EOS`) of each attribute's corpus.
    pub fn new(
        model: CaeModel,
        config: TrainingConfig,
        vocab: Vocabulary,
        first: Vec<Vec<usize>>,
        second: Vec<Vec<usize>>,
    ) -> Result<Self> {
        config.validate()?;
        if model.config().vocab_size != vocab.len() {
            return Err(Error::Config(format!(
                "model vocabulary {} differs from vocabulary file {}",
                model.config().vocab_size,
                vocab.len()
            )));
        }
        let code = Attribute::BOTH
            .iter()
            .map(|&a| control_code(a, &vocab).len())
            .max()
            .unwrap_or(0);
        if code + config.max_len > model.config().max_positions {
            return Err(Error::Config(format!(
                "max_len {} plus a {code}-token control code exceeds {} positions",
                config.max_len,
                model.config().max_positions
            )));
        }
        for (a, corpus) in Attribute::BOTH.iter().zip([&first, &second]) {
            if corpus.is_empty() {
                return Err(Error::Data(format!(
                    "no training sentences for attribute {:?}",
                    vocab.attribute_name(*a)
                )));
            }
            for s in corpus {
                if s.is_empty() {
                    return Err(Error::EmptyInput);
                }
                if s.len() > config.max_len {
                    return Err(Error::SequenceTooLong {
                        len: s.len(),
                        max: config.max_len,
                    });
                }
                if let Some(&bad) = s.iter().find(|&&id| id >= vocab.len()) {
                    return Err(Error::Vocab(format!("token id {bad} outside vocabulary")));
                }
            }
        }
        let quota = first.len().min(second.len());
        let streams = [
            ClassStream::new(first.len(), quota, config.seed, 0),
            ClassStream::new(second.len(), quota, config.seed, 1),
        ];
        let optimizer = Adam::new(config.adam, model.params());
        Ok(Trainer {
            model,
            optimizer,
            config,
            vocab,
            corpora: [first, second],
            streams,
            history: Vec::new(),
        })
    }

    pub fn model(&self) -> &CaeModel {
        &self.model
    }

    pub fn into_model(self) -> CaeModel {
        self.model
    }

    pub fn config(&self) -> &TrainingConfig {
        &self.config
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn history(&self) -> &[StepLosses] {
        &self.history
    }

    /// Completed steps.
    pub fn steps_done(&self) -> u64 {
        self.history.len() as u64
    }

    /// The batch for the next step.
    pub fn next_batch(&mut self) -> Vec<TokenSequence> {
        let attribute = step_attribute(self.steps_done());
        let i = attribute.index();
        self.streams[i]
            .take(self.config.batch_size)
            .into_iter()
            .map(|k| TokenSequence::new(self.corpora[i][k].clone(), attribute))
            .collect()
    }

    pub fn step(&mut self) -> Result<StepLosses> {
        let batch = self.next_batch();
        let step = self.steps_done();
        let losses = train_step(
            &mut self.model,
            &mut self.optimizer,
            &self.config,
            &self.vocab,
            &batch,
            step,
        )?;
        self.history.push(losses);
        Ok(losses)
    }

    pub fn metrics(&self) -> BTreeMap<String, f64> {
        let mut m = BTreeMap::new();
        if let Some(last) = self.history.last() {
            m.insert("loss_dae".into(), last.dae as f64);
            m.insert("loss_cc".into(), last.cc as f64);
            m.insert("loss_total".into(), last.total as f64);
        }
        m
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        save_checkpoint(
            path,
            &self.model,
            &self.vocab,
            self.steps_done(),
            Some(&self.config),
            &self.metrics(),
        )
    }

    /// Runs until `config.steps` are done, writing one log line per step and
    /// periodic checkpoints `step-NNNNNN.ckpt` into `checkpoint_dir`.
    pub fn run(&mut self, mut log: Option<&mut dyn Write>, checkpoint_dir: Option<&Path>) -> Result<()> {
        while self.steps_done() < self.config.steps {
            let losses = self.step()?;
            if let Some(w) = log.as_mut() {
                writeln!(w, "{}", losses.log_line())?;
            }
            let every = self.config.checkpoint_every;
            if let Some(dir) = checkpoint_dir {
                if every > 0 && losses.step % every == 0 {
                    self.save(&dir.join(format!("step-{:06}.ckpt", losses.step)))?;
                }
            }
        }
        if let Some(w) = log.as_mut() {
            w.flush()?;
        }
        Ok(())
    }
}

/// Builds a trainer and runs it to completion.
pub fn train(
    model: CaeModel,
    config: TrainingConfig,
    vocab: Vocabulary,
    first: Vec<Vec<usize>>,
    second: Vec<Vec<usize>>,
    log: Option<&mut dyn Write>,
) -> Result<Trainer> {
    let mut t = Trainer::new(model, config, vocab, first, second)?;
    t.run(log, None)?;
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;
    use crate::text::{VocabOptions, EOS};
    use crate::training::config::AdamConfig;
    use crate::training::losses::{back_transfer_loss, pseudo_transfer};

    pub(crate) fn fixture() -> (Vocabulary, CaeModel, Vec<Vec<usize>>, Vec<Vec<usize>>) {
        let words: Vec<String> = (0..12).map(|i| format!("w{i}")).chain(["tox".into(), "civ".into()]).collect();
        let text = words.join(" ");
        let vocab =
            Vocabulary::build([text.as_str(), text.as_str()], ["toxic", "civil"], &VocabOptions::default()).unwrap();
        let id = |w: &str| vocab.id(w).unwrap();
        let mk = |marker: &str, k: usize| -> Vec<usize> {
            vec![id(&format!("w{}", k % 12)), id(marker), id(&format!("w{}", (k * 5 + 1) % 12)), EOS]
        };
        let first: Vec<Vec<usize>> = (0..7).map(|k| mk("tox", k)).collect();
        let second: Vec<Vec<usize>> = (0..5).map(|k| mk("civ", k + 3)).collect();
        let mc = ModelConfig {
            d_model: 16,
            d_ff: 32,
            heads: 2,
            encoder_layers: 1,
            decoder_layers: 1,
            max_positions: 16,
            ..ModelConfig::desk(vocab.len())
        };
        let model = CaeModel::new(mc, 5).unwrap();
        (vocab, model, first, second)
    }

    fn config(steps: u64) -> TrainingConfig {
        TrainingConfig {
            steps,
            batch_size: 4,
            max_len: 8,
            seed: 11,
            adam: AdamConfig {
                learning_rate: 1e-3,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn batches_alternate_attributes() {
        let (vocab, model, first, second) = fixture();
        let mut t = Trainer::new(model, config(4), vocab, first, second).unwrap();
        let a = t.next_batch();
        t.step().unwrap();
        let b = t.next_batch();
        assert_eq!(a[0].attribute, Attribute::First);
        assert_eq!(b[0].attribute, Attribute::Second);
        assert_ne!(step_attribute(0), step_attribute(1));
    }

    #[test]
    fn total_is_weighted_sum() {
        let (vocab, model, first, second) = fixture();
        let mut t = Trainer::new(model, config(2), vocab, first, second).unwrap();
        let l = t.step().unwrap();
        assert_eq!(l.total, l.dae + l.cc);
        assert!(l.dae >= 0.0 && l.cc >= 0.0);
        assert_eq!(l.step, 1);
        assert_eq!(l.log_line().split('\t').count(), 4);
    }

    #[test]
    fn identical_seeds_give_identical_runs() {
        let run = || {
            let (vocab, model, first, second) = fixture();
            let mut log = Vec::new();
            let t = train(model, config(6), vocab, first, second, Some(&mut log)).unwrap();
            (log, t.model().params().clone())
        };
        let (l1, p1) = run();
        let (l2, p2) = run();
        assert_eq!(l1, l2);
        assert_eq!(p1, p2);
        assert_eq!(String::from_utf8(l1).unwrap().lines().count(), 6);
    }

    #[test]
    fn zero_cc_weight_matches_a_pure_denoising_loop() {
        let (vocab, model, first, second) = fixture();
        let cfg = TrainingConfig {
            lambda_cc: 0.0,
            ..config(5)
        };
        let mut t = Trainer::new(model.clone(), cfg.clone(), vocab.clone(), first.clone(), second.clone()).unwrap();
        t.run(None, None).unwrap();

        // the same schedule written out by hand with only the denoising term
        let mut shadow = Trainer::new(model.clone(), cfg.clone(), vocab.clone(), first, second).unwrap();
        let mut m = model;
        let mut opt = Adam::new(cfg.adam, m.params());
        for step in 0..cfg.steps {
            let batch = shadow.next_batch();
            shadow.history.push(StepLosses { step, dae: 0.0, cc: 0.0, total: 0.0 });
            let mut rng = stream_rng(cfg.seed, NOISE_TAG, step);
            let seed: u64 = stream_rng(cfg.seed, DROPOUT_TAG, step).gen();
            let mut tape = Tape::training(seed);
            let bound = m.params().bind(&mut tape, true);
            let l = dae_loss(&m, &mut tape, &bound, &batch, &vocab, &cfg.noise, &mut rng).unwrap();
            let l = tape.scale(l, 1.0);
            let g = tape.backward(l).unwrap();
            let flat: Vec<&[f32]> = bound.vars().iter().map(|&v| g.get(v).unwrap()).collect();
            opt.step(m.params_mut(), &flat, cfg.clip_norm).unwrap();
        }
        assert_eq!(t.model().params(), m.params());
        assert!(t.history().iter().all(|l| l.cc == 0.0));
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let (vocab, model, first, second) = fixture();
        let before = model.params().clone();
        let mut cfg = config(3);
        cfg.adam.learning_rate = 0.0;
        let t = train(model, cfg, vocab, first, second, None).unwrap();
        assert_eq!(t.model().params(), &before);
    }

    #[test]
    fn non_finite_loss_aborts_with_step_and_components() {
        let (vocab, mut model, first, second) = fixture();
        let n = model.params().get(0).numel();
        model.params_mut().get_mut(0).data_mut()[..n].fill(f32::NAN);
        let err = train(model, config(3), vocab, first, second, None).unwrap_err();
        assert!(matches!(err, Error::NonFinite { step: 1, .. }), "{err}");
    }

    #[test]
    fn mixed_batch_is_rejected() {
        let (vocab, model, first, second) = fixture();
        let batch = vec![
            TokenSequence::new(first[0].clone(), Attribute::First),
            TokenSequence::new(second[0].clone(), Attribute::Second),
        ];
        let mut opt = Adam::new(AdamConfig::default(), model.params());
        let mut m = model;
        let err = train_step(&mut m, &mut opt, &config(1), &vocab, &batch, 0).unwrap_err();
        assert!(matches!(err, Error::MixedAttributes));
    }

    #[test]
    fn initial_loss_is_near_log_vocab() {
        use crate::text::NoiseConfig;
        use rand::SeedableRng;
        let words: Vec<String> = (0..251).map(|i| format!("t{i}")).collect();
        let text = words.join(" ");
        let vocab = Vocabulary::build([text.as_str(), text.as_str()], ["a", "b"], &VocabOptions::default()).unwrap();
        // 5 reserved + "a", "b", ":" + 248 words
        let vocab = Vocabulary::from_tokens(vocab.tokens()[..256].to_vec(), ["a", "b"]).unwrap();
        assert_eq!(vocab.len(), 256);
        let model = CaeModel::new(ModelConfig::desk(256), 1).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let batch: Vec<TokenSequence> = (0..16)
            .map(|_| {
                let ids = (0..8).map(|_| rng.gen_range(8..256)).chain([EOS]).collect();
                TokenSequence::new(ids, Attribute::First)
            })
            .collect();
        let mut tape = Tape::new();
        let bound = model.params().bind(&mut tape, false);
        let l = dae_loss(&model, &mut tape, &bound, &batch, &vocab, &NoiseConfig::default(), &mut rng).unwrap();
        let v = tape.value(l).item();
        assert!((v - 256f32.ln()).abs() <= 0.5, "initial loss {v}");
    }

    #[test]
    fn back_transfer_from_identity_equals_noiseless_denoising() {
        use crate::text::NoiseConfig;
        use rand::SeedableRng;
        let (vocab, model, first, _) = fixture();
        let batch: Vec<TokenSequence> =
            first.iter().take(3).map(|s| TokenSequence::new(s.clone(), Attribute::First)).collect();
        let ids: Vec<Vec<usize>> = batch.iter().map(|s| s.ids.clone()).collect();
        let mut tape = Tape::new();
        let bound = model.params().bind(&mut tape, false);
        let cc = back_transfer_loss(&model, &mut tape, &bound, &ids, &batch, &vocab).unwrap();
        let none = NoiseConfig { mask_prob: 0.0, random_frac: 0.0 };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let dae = dae_loss(&model, &mut tape, &bound, &batch, &vocab, &none, &mut rng).unwrap();
        assert_eq!(tape.value(cc).item(), tape.value(dae).item());
    }

    #[test]
    fn frozen_snapshot_is_untouched_and_pseudo_input_is_plain_data() {
        let (vocab, model, first, _) = fixture();
        let frozen = model.clone();
        let batch: Vec<TokenSequence> =
            first.iter().take(4).map(|s| TokenSequence::new(s.clone(), Attribute::First)).collect();

        let mut tape = Tape::new();
        let bound = model.params().bind(&mut tape, true);
        let (loss, pseudo) = cc_loss(&model, &frozen, &mut tape, &bound, &batch, &vocab, 8).unwrap();
        let g1 = tape.backward(loss).unwrap();
        let g1: Vec<Vec<f32>> = bound.vars().iter().map(|&v| g1.get(v).unwrap().to_vec()).collect();
        assert_eq!(frozen.params(), model.params());
        assert_eq!(pseudo, pseudo_transfer(&frozen, &batch, &vocab, 8).unwrap());

        let mut tape = Tape::new();
        let bound = model.params().bind(&mut tape, true);
        let constant = pseudo.clone();
        let loss = back_transfer_loss(&model, &mut tape, &bound, &constant, &batch, &vocab).unwrap();
        let g2 = tape.backward(loss).unwrap();
        let g2: Vec<Vec<f32>> = bound.vars().iter().map(|&v| g2.get(v).unwrap().to_vec()).collect();
        assert_eq!(g1, g2);
    }

    #[test]
    fn corpus_validation() {
        let (vocab, model, first, _) = fixture();
        assert!(Trainer::new(model.clone(), config(1), vocab.clone(), first.clone(), vec![]).is_err());
        let long = vec![vec![7; 9]];
        assert!(Trainer::new(model, config(1), vocab, first, long).is_err());
    }
}
