use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::tokenize::split_words;
use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;
pub const UNK: usize = 3;
/// Shared mask token written over corrupted positions.
pub const SENTINEL: usize = 4;
pub const NUM_RESERVED: usize = 5;

pub const RESERVED_TOKENS: [&str; NUM_RESERVED] = ["<pad>", "<s>", "</s>", "<unk>", "<mask>"];

/// Separator closing every control code.
pub const CODE_SEPARATOR: &str = ":";

/// One of the two mutually exclusive attributes of a corpus.
///
/// `First` names the attribute transfer usually starts from ("toxic",
/// "positive"), `Second` its counterpart.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Attribute {
    First,
    Second,
}

impl Attribute {
    pub fn other(self) -> Self {
        match self {
            Attribute::First => Attribute::Second,
            Attribute::Second => Attribute::First,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Attribute::First => 0,
            Attribute::Second => 1,
        }
    }

    pub fn from_index(i: usize) -> Self {
        if i == 0 {
            Attribute::First
        } else {
            Attribute::Second
        }
    }

    pub const BOTH: [Attribute; 2] = [Attribute::First, Attribute::Second];
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VocabOptions {
    pub min_freq: usize,
    /// Total size cap, reserved and control-code tokens included.
    pub max_size: usize,
}

impl Default for VocabOptions {
    fn default() -> Self {
        VocabOptions {
            min_freq: 2,
            max_size: 8192,
        }
    }
}

/// Token ↔ id map with fixed reserved ids and per-attribute control codes.
#[derive(Clone, Debug, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    attributes: [String; 2],
    codes: [Vec<usize>; 2],
}

impl Vocabulary {
    /// Frequency-ranked vocabulary over `texts`; ties break lexicographically.
    pub fn build<'a>(
        texts: impl IntoIterator<Item = &'a str>,
        attributes: [&str; 2],
        options: &VocabOptions,
    ) -> Result<Self> {
        let mut tokens: Vec<String> = RESERVED_TOKENS.iter().map(|s| s.to_string()).collect();
        for name in attributes {
            for w in split_words(&name.to_lowercase()) {
                if !tokens.contains(&w) {
                    tokens.push(w);
                }
            }
        }
        if !tokens.iter().any(|t| t == CODE_SEPARATOR) {
            tokens.push(CODE_SEPARATOR.to_string());
        }

        let mut counts: HashMap<String, usize> = HashMap::new();
        for text in texts {
            for w in split_words(&text.to_lowercase()) {
                *counts.entry(w).or_default() += 1;
            }
        }
        let mut ranked: Vec<(String, usize)> = counts
            .into_iter()
            .filter(|(w, c)| *c >= options.min_freq && !tokens.contains(w))
            .collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let room = options.max_size.saturating_sub(tokens.len());
        tokens.extend(ranked.into_iter().take(room).map(|(w, _)| w));
        Self::from_tokens(tokens, attributes)
    }

    /// Validates an ordered token list; line `i` of a vocabulary file is id `i`.
    pub fn from_tokens(tokens: Vec<String>, attributes: [&str; 2]) -> Result<Self> {
        for (i, r) in RESERVED_TOKENS.iter().enumerate() {
            if tokens.get(i).map(String::as_str) != Some(*r) {
                return Err(Error::Vocab(format!("id {i} must be the reserved token {r}")));
            }
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty() || t.chars().any(char::is_whitespace) {
                return Err(Error::Vocab(format!("token {i} is empty or contains whitespace")));
            }
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::Vocab(format!("duplicate token {t:?}")));
            }
        }
        if attributes[0].to_lowercase() == attributes[1].to_lowercase() {
            return Err(Error::Vocab("the two attributes must differ".into()));
        }
        let mut codes: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
        for (slot, name) in codes.iter_mut().zip(attributes) {
            let mut words = split_words(&name.to_lowercase());
            if words.is_empty() {
                return Err(Error::Vocab("empty attribute name".into()));
            }
            words.push(CODE_SEPARATOR.to_string());
            for w in words {
                let id = *index
                    .get(&w)
                    .ok_or_else(|| Error::Vocab(format!("control-code token {w:?} missing")))?;
                slot.push(id);
            }
        }
        Ok(Vocabulary {
            tokens,
            index,
            attributes: attributes.map(|a| a.to_lowercase()),
            codes,
        })
    }

    pub fn load(path: impl AsRef<Path>, attributes: [&str; 2]) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_tokens(text.lines().map(str::to_string).collect(), attributes)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.file_contents())?;
        Ok(())
    }

    fn file_contents(&self) -> String {
        let mut s = String::new();
        for t in &self.tokens {
            s.push_str(t);
            s.push('\n');
        }
        s
    }

    /// SHA-256 of the serialized token list, hex encoded.
    pub fn content_hash(&self) -> String {
        let digest = Sha256::digest(self.file_contents().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn attribute_names(&self) -> [&str; 2] {
        [&self.attributes[0], &self.attributes[1]]
    }

    pub fn attribute_name(&self, a: Attribute) -> &str {
        &self.attributes[a.index()]
    }

    pub fn attribute(&self, name: &str) -> Result<Attribute> {
        let lower = name.to_lowercase();
        self.attributes
            .iter()
            .position(|a| *a == lower)
            .map(Attribute::from_index)
            .ok_or_else(|| Error::UnknownAttribute(name.to_string()))
    }

    pub fn is_reserved(id: usize) -> bool {
        id < NUM_RESERVED
    }

    /// Maps in-vocabulary tokens to ids, everything else to `UNK`.
    pub fn encode_words<S: AsRef<str>>(&self, words: &[S]) -> Vec<usize> {
        words
            .iter()
            .map(|w| self.id(w.as_ref()).unwrap_or(UNK))
            .collect()
    }

    /// Space-joined tokens up to the first `EOS`; `PAD` and `BOS` are dropped.
    pub fn decode(&self, ids: &[usize]) -> String {
        self.decode_words(ids).join(" ")
    }

    pub fn decode_words(&self, ids: &[usize]) -> Vec<&str> {
        ids.iter()
            .take_while(|&&i| i != EOS)
            .filter(|&&i| i != PAD && i != BOS)
            .map(|&i| self.token(i).unwrap_or(RESERVED_TOKENS[UNK]))
            .collect()
    }

    pub(crate) fn code(&self, a: Attribute) -> &[usize] {
        &self.codes[a.index()]
    }
}
