use std::fs;
use std::path::{Path, PathBuf};

use super::polarize::{PolarizedCorpus, Provenance, SplitCounts};
use crate::error::{Error, Result};
use crate::text::{Attribute, VocabOptions, Vocabulary};

pub const VOCAB_FILE: &str = "vocab.txt";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Dev,
    Test,
}

pub struct OutputPaths {
    pub first: PathBuf,
    pub second: PathBuf,
    pub provenance: PathBuf,
    pub vocab: PathBuf,
}

impl OutputPaths {
    pub fn new(dir: &Path, name: &str) -> Self {
        OutputPaths {
            first: dir.join(format!("{name}.T.txt")),
            second: dir.join(format!("{name}.C.txt")),
            provenance: dir.join(format!("{name}.provenance.json")),
            vocab: dir.join(VOCAB_FILE),
        }
    }

    pub fn all(&self) -> [&Path; 4] {
        [&self.first, &self.second, &self.provenance, &self.vocab]
    }
}

/// Vocabulary over the training splits of both sides.
pub fn build_vocab(corpus: &PolarizedCorpus, options: &VocabOptions) -> Result<Vocabulary> {
    let [s0, s1] = &corpus.provenance.splits;
    let texts = corpus.first[..s0.train]
        .iter()
        .chain(&corpus.second[..s1.train])
        .map(|s| s.text.as_str());
    let [a0, a1] = &corpus.provenance.attributes;
    Vocabulary::build(texts, [a0, a1], options)
}

/// Writes `<name>.T.txt`, `<name>.C.txt`, `<name>.provenance.json` and the vocabulary.
/// Existing files are an error unless `force`.
pub fn write_prepared(
    dir: &Path,
    name: &str,
    corpus: &PolarizedCorpus,
    vocab: &Vocabulary,
    force: bool,
) -> Result<OutputPaths> {
    let paths = OutputPaths::new(dir, name);
    if !force {
        if let Some(p) = paths.all().iter().find(|p| p.exists()) {
            return Err(Error::Config(format!(
                "{} exists; pass --force to overwrite",
                p.display()
            )));
        }
    }
    fs::create_dir_all(dir)?;
    let lines = |v: &[super::ScoredSentence]| {
        v.iter().map(|s| format!("{}\n", s.text.replace('\n', " "))).collect::<String>()
    };
    fs::write(&paths.first, lines(&corpus.first))?;
    fs::write(&paths.second, lines(&corpus.second))?;
    fs::write(
        &paths.provenance,
        serde_json::to_string_pretty(&corpus.provenance)? + "\n",
    )?;
    vocab.save(&paths.vocab)?;
    Ok(paths)
}

/// Sentences of both attribute files together with their recorded splits.
#[derive(Clone, Debug)]
pub struct PreparedData {
    pub provenance: Provenance,
    pub sides: [Vec<String>; 2],
    pub vocab: Vocabulary,
}

impl PreparedData {
    pub fn load(dir: &Path, name: &str) -> Result<Self> {
        let paths = OutputPaths::new(dir, name);
        let provenance: Provenance = serde_json::from_str(&fs::read_to_string(&paths.provenance)?)?;
        let read = |p: &Path, expected: &SplitCounts| -> Result<Vec<String>> {
            let lines: Vec<String> = fs::read_to_string(p)?.lines().map(str::to_string).collect();
            if lines.len() != expected.total() {
                return Err(Error::Data(format!(
                    "{} has {} lines but its provenance records {}",
                    p.display(),
                    lines.len(),
                    expected.total()
                )));
            }
            Ok(lines)
        };
        let sides = [
            read(&paths.first, &provenance.splits[0])?,
            read(&paths.second, &provenance.splits[1])?,
        ];
        let [a0, a1] = &provenance.attributes;
        let vocab = Vocabulary::load(&paths.vocab, [a0, a1])?;
        Ok(PreparedData {
            provenance,
            sides,
            vocab,
        })
    }

    pub fn split(&self, attribute: Attribute, split: Split) -> &[String] {
        let c = &self.provenance.splits[attribute.index()];
        let side = &self.sides[attribute.index()];
        match split {
            Split::Train => &side[..c.train],
            Split::Dev => &side[c.train..c.train + c.dev],
            Split::Test => &side[c.train + c.dev..],
        }
    }
}
