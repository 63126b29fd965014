use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::TrainingConfig;
use crate::archive::{self, ArrayEntry};
use crate::error::{Error, Result};
use crate::model::{CaeModel, ModelConfig};
use crate::text::Vocabulary;

pub const MAGIC: &[u8; 8] = b"CAETCKPT";
const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
struct VocabEntry {
    attributes: [String; 2],
    sha256: String,
    tokens: Vec<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    step: u64,
    model: ModelConfig,
    training: Option<TrainingConfig>,
    vocab: VocabEntry,
    arrays: Vec<ArrayEntry>,
    metrics: BTreeMap<String, f64>,
}

/// Everything restored from a checkpoint file.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub model: CaeModel,
    pub vocab: Vocabulary,
    pub step: u64,
    pub training: Option<TrainingConfig>,
    pub metrics: BTreeMap<String, f64>,
}

/// Serializes a checkpoint to bytes.
pub fn encode_checkpoint(
    model: &CaeModel,
    vocab: &Vocabulary,
    step: u64,
    training: Option<&TrainingConfig>,
    metrics: &BTreeMap<String, f64>,
) -> Result<Vec<u8>> {
    if let Some((k, _)) = metrics.iter().find(|(_, v)| !v.is_finite()) {
        return Err(Error::Checkpoint(format!("metric {k} is not finite")));
    }
    let arrays = archive::array_index(model.params().iter());
    let [a0, a1] = vocab.attribute_names();
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        step,
        model: model.config().clone(),
        training: training.cloned(),
        vocab: VocabEntry {
            attributes: [a0.to_string(), a1.to_string()],
            sha256: vocab.content_hash(),
            tokens: vocab.tokens().to_vec(),
        },
        arrays,
        metrics: metrics.clone(),
    };
    archive::write(MAGIC, &manifest, model.params().iter().map(|(_, t)| t))
}

/// Writes the checkpoint next to `path` and renames it into place.
pub fn save_checkpoint(
    path: &Path,
    model: &CaeModel,
    vocab: &Vocabulary,
    step: u64,
    training: Option<&TrainingConfig>,
    metrics: &BTreeMap<String, f64>,
) -> Result<()> {
    let bytes = encode_checkpoint(model, vocab, step, training, metrics)?;
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let (manifest, data): (Manifest, _) = archive::split(MAGIC, bytes, Error::Checkpoint)?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(corrupt(format!(
            "unsupported format version {}",
            manifest.format_version
        )));
    }
    let v = &manifest.vocab;
    let vocab = Vocabulary::from_tokens(v.tokens.clone(), [&v.attributes[0], &v.attributes[1]])?;
    if vocab.content_hash() != v.sha256 {
        return Err(corrupt("vocabulary hash mismatch"));
    }
    if manifest.model.vocab_size != vocab.len() {
        return Err(corrupt(format!(
            "model expects {} tokens, vocabulary has {}",
            manifest.model.vocab_size,
            vocab.len()
        )));
    }
    let arrays = archive::read_arrays(&manifest.arrays, data, Error::Checkpoint)?;
    let model = CaeModel::from_arrays(manifest.model, arrays)?;
    Ok(Checkpoint {
        model,
        vocab,
        step: manifest.step,
        training: manifest.training,
        metrics: manifest.metrics,
    })
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    decode_checkpoint(&fs::read(path)?)
}

/// Loads and checks that the stored vocabulary is exactly `vocab`.
pub fn load_checkpoint_for(path: &Path, vocab: &Vocabulary) -> Result<Checkpoint> {
    let ck = load_checkpoint(path)?;
    if ck.vocab.content_hash() != vocab.content_hash() {
        return Err(corrupt(format!(
            "{} was trained with a different vocabulary",
            path.display()
        )));
    }
    Ok(ck)
}
