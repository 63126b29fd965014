use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::classifier::{Classifier, ClassifierConfig};
use super::embedder::SentenceEmbedder;
use super::lm::{FluencyLm, LmConfig};
use crate::archive::{self, ArrayEntry};
use crate::error::{Error, Result};
use crate::text::Vocabulary;

pub const EVAL_MAGIC: &[u8; 8] = b"CAETEVAL";

/// Everything the metrics need, trained once per dataset.
#[derive(Clone, Debug)]
pub struct EvalModels {
    pub classifier: Classifier,
    pub lm: FluencyLm,
    pub vocab_sha256: String,
    /// Subtract the vocabulary mean before normalizing sentence embeddings.
    pub centered_embeddings: bool,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    vocab_sha256: String,
    vocab_size: usize,
    centered_embeddings: bool,
    classifier: ClassifierConfig,
    lm: LmConfig,
    classifier_arrays: Vec<ArrayEntry>,
    lm_arrays: Vec<ArrayEntry>,
}

impl EvalModels {
    pub fn embedder(&self) -> SentenceEmbedder {
        SentenceEmbedder::new(self.lm.token_embeddings().clone(), self.centered_embeddings)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let clf = self.classifier.params();
        let lm = self.lm.params();
        let manifest = Manifest {
            vocab_sha256: self.vocab_sha256.clone(),
            vocab_size: self.lm.token_embeddings().rows(),
            centered_embeddings: self.centered_embeddings,
            classifier: self.classifier.config().clone(),
            lm: self.lm.config().clone(),
            classifier_arrays: archive::array_index(clf.iter()),
            lm_arrays: archive::array_index(lm.iter()),
        };
        let bytes = archive::write(
            EVAL_MAGIC,
            &manifest,
            clf.iter().chain(lm.iter()).map(|(_, t)| t),
        )?;
        fs::write(path, bytes)?;
        Ok(())
    }

    /// Loads models and checks they were trained with `vocab`.
    pub fn load(path: &Path, vocab: &Vocabulary) -> Result<Self> {
        let bytes = fs::read(path)?;
        let (m, data): (Manifest, _) = archive::split(EVAL_MAGIC, &bytes, Error::Eval)?;
        if m.vocab_sha256 != vocab.content_hash() || m.vocab_size != vocab.len() {
            return Err(Error::Eval(format!(
                "{} was trained with a different vocabulary",
                path.display()
            )));
        }
        let clf_bytes: u64 = m
            .classifier_arrays
            .last()
            .map_or(0, |e| e.offset + 4 * e.shape.iter().product::<usize>() as u64);
        if clf_bytes > data.len() as u64 {
            return Err(Error::Eval("truncated evaluation model file".into()));
        }
        let (clf_data, lm_data) = data.split_at(clf_bytes as usize);
        let mut classifier = Classifier::new(m.classifier, m.vocab_size)?;
        classifier.replace_params(archive::read_arrays(&m.classifier_arrays, clf_data, Error::Eval)?)?;
        let mut lm = FluencyLm::new(m.lm, m.vocab_size)?;
        lm.replace_params(archive::read_arrays(&m.lm_arrays, lm_data, Error::Eval)?)?;
        Ok(EvalModels {
            classifier,
            lm,
            vocab_sha256: m.vocab_sha256,
            centered_embeddings: m.centered_embeddings,
        })
    }
}
