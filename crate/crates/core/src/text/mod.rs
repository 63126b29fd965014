//! Vocabulary, tokenizer, control codes and the input corruption function.

mod noise;
mod tokenize;
mod vocab;

pub use noise::{corrupt, corrupt_with_stats, NoiseConfig, NoiseStats};
pub use tokenize::{detokenize, split_words, tokenize, TokenSequence};
pub use vocab::{
    Attribute, VocabOptions, Vocabulary, BOS, CODE_SEPARATOR, EOS, NUM_RESERVED, PAD,
    RESERVED_TOKENS, SENTINEL, UNK,
};

use crate::error::Result;

/// Token ids of the control code for `attribute`: its name followed by `:`.
pub fn control_code(attribute: Attribute, vocab: &Vocabulary) -> Vec<usize> {
    vocab.code(attribute).to_vec()
}

/// Looks the attribute up by name, then builds its control code.
pub fn control_code_by_name(name: &str, vocab: &Vocabulary) -> Result<Vec<usize>> {
    Ok(control_code(vocab.attribute(name)?, vocab))
}

/// Decoder input: the control code of `attribute` followed by `suffix`.
pub fn gamma(attribute: Attribute, suffix: &[usize], vocab: &Vocabulary) -> Vec<usize> {
    let code = vocab.code(attribute);
    let mut out = Vec::with_capacity(code.len() + suffix.len());
    out.extend_from_slice(code);
    out.extend_from_slice(suffix);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn vocab() -> Vocabulary {
        Vocabulary::build(["x y z x y z"], ["toxic", "civil"], &VocabOptions::default()).unwrap()
    }

    #[test]
    fn control_code_is_name_then_colon() {
        let v = vocab();
        let c = control_code(Attribute::Second, &v);
        assert_eq!(c, vec![v.id("civil").unwrap(), v.id(":").unwrap()]);
        assert_eq!(c, control_code(Attribute::Second, &v));
        assert_eq!(control_code_by_name("toxic", &v).unwrap()[0], v.id("toxic").unwrap());
        assert!(control_code_by_name("rude", &v).is_err());
    }

    #[test]
    fn gamma_prepends_the_code() {
        let v = vocab();
        let code = control_code(Attribute::First, &v);
        assert_eq!(gamma(Attribute::First, &[], &v), code);
        assert_eq!(
            gamma(Attribute::First, &[BOS, 5], &v),
            vec![v.id("toxic").unwrap(), v.id(":").unwrap(), BOS, 5]
        );
    }

    proptest! {
        #[test]
        fn gamma_prefix_length_and_injectivity(s in prop::collection::vec(0usize..20, 0..12), t in prop::collection::vec(0usize..20, 0..12)) {
            let v = vocab();
            for a in Attribute::BOTH {
                let gs = gamma(a, &s, &v);
                let code = control_code(a, &v);
                prop_assert!(gs.starts_with(&code));
                prop_assert_eq!(gs.len() - s.len(), code.len());
                prop_assert_eq!(gs == gamma(a, &t, &v), s == t);
            }
        }
    }
}
