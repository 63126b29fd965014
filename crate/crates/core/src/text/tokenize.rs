use serde::{Deserialize, Serialize};

use super::vocab::{Attribute, Vocabulary, EOS};
use crate::error::{Error, Result};

/// Splits already-lowercased text into word and punctuation tokens.
///
/// A word is a maximal run of alphanumerics, `'` and `_`; every other
/// non-space character is a token of its own.
pub fn split_words(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut word = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() || ch == '\'' || ch == '_' {
            word.push(ch);
            continue;
        }
        if !word.is_empty() {
            out.push(std::mem::take(&mut word));
        }
        if !ch.is_whitespace() {
            out.push(ch.to_string());
        }
    }
    if !word.is_empty() {
        out.push(word);
    }
    out
}

/// Lowercases, splits, maps to ids and truncates to `max_len`, appending
/// `EOS` when there is room.
pub fn tokenize(text: &str, vocab: &Vocabulary, max_len: usize) -> Result<Vec<usize>> {
    if max_len == 0 {
        return Err(Error::Config("max_len must be at least 1".into()));
    }
    let words = split_words(&text.to_lowercase());
    if words.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut ids = vocab.encode_words(&words);
    ids.truncate(max_len);
    if ids.len() < max_len {
        ids.push(EOS);
    }
    Ok(ids)
}

pub fn detokenize(ids: &[usize], vocab: &Vocabulary) -> String {
    vocab.decode(ids)
}

/// Token ids of one sentence together with its attribute.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence {
    pub ids: Vec<usize>,
    pub attribute: Attribute,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
}

impl TokenSequence {
    pub fn new(ids: Vec<usize>, attribute: Attribute) -> Self {
        TokenSequence {
            ids,
            attribute,
            text: None,
        }
    }

    pub fn from_text(
        text: &str,
        attribute: Attribute,
        vocab: &Vocabulary,
        max_len: usize,
    ) -> Result<Self> {
        Ok(TokenSequence {
            ids: tokenize(text, vocab, max_len)?,
            attribute,
            text: Some(text.to_string()),
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::vocab::{VocabOptions, UNK};
    use proptest::prelude::*;

    fn vocab_with(words: &[&str]) -> Vocabulary {
        let text = words.join(" ");
        Vocabulary::build(
            [text.as_str(), text.as_str()],
            ["toxic", "civil"],
            &VocabOptions::default(),
        )
        .unwrap()
    }

    #[test]
    fn splits_words_and_punctuation() {
        assert_eq!(
            split_words("don't stop, ok?!"),
            vec!["don't", "stop", ",", "ok", "?", "!"]
        );
        assert!(split_words("   ").is_empty());
    }

    #[test]
    fn single_token_gets_eos() {
        let v = vocab_with(&["hello"]);
        let id = v.id("hello").unwrap();
        assert_eq!(tokenize("Hello", &v, 32).unwrap(), vec![id, EOS]);
    }

    #[test]
    fn unknown_words_map_to_unk() {
        let v = vocab_with(&["hello"]);
        assert_eq!(tokenize("hello zebra", &v, 8).unwrap()[1], UNK);
    }

    #[test]
    fn truncation_drops_eos_when_full() {
        let v = vocab_with(&["a", "b", "c"]);
        let ids = tokenize("a b c a b c", &v, 4).unwrap();
        assert_eq!(ids.len(), 4);
        assert!(!ids.contains(&EOS));
        assert_eq!(tokenize("a b c", &v, 4).unwrap().last(), Some(&EOS));
    }

    #[test]
    fn empty_text_is_an_error() {
        let v = vocab_with(&["a"]);
        assert!(matches!(tokenize("  \t", &v, 4), Err(Error::EmptyInput)));
    }

    proptest! {
        #[test]
        fn length_never_exceeds_max(words in prop::collection::vec("[a-z]{1,6}", 1..80), max_len in 1usize..40) {
            let v = vocab_with(&["a"]);
            let ids = tokenize(&words.join(" "), &v, max_len).unwrap();
            prop_assert!(ids.len() <= max_len);
        }

        #[test]
        fn round_trip_for_in_vocabulary_text(picks in prop::collection::vec(0usize..6, 1..20), upper in any::<bool>()) {
            let pool = ["alpha", "beta", "gamma", ".", "delta", "!"];
            let v = vocab_with(&pool);
            let words: Vec<&str> = picks.iter().map(|&i| pool[i]).collect();
            let mut s = words.join(" ");
            if upper {
                s = s.to_uppercase();
            }
            let ids = tokenize(&s, &v, 64).unwrap();
            prop_assert_eq!(detokenize(&ids, &v), s.to_lowercase());
        }
    }
}
