use std::collections::HashSet;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::polarize::{PolarizedCorpus, Provenance, ScoredSentence, SplitCounts};
use crate::error::{Error, Result};
use crate::text::Attribute;

/// Two-attribute toy language: `content* marker content*`, where the marker
/// alone carries the attribute.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub attributes: [String; 2],
    /// Marker `i` of attribute `a` is `{marker_prefixes[a]}{i}`.
    pub marker_prefixes: [String; 2],
    pub markers_per_attribute: usize,
    /// Content words are `w000`, `w001`, ...
    pub content_words: usize,
    /// Inclusive range of content tokens per sentence.
    pub min_content: usize,
    pub max_content: usize,
    pub dev_fraction: f64,
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            attributes: ["toxic".into(), "civil".into()],
            marker_prefixes: ["tox".into(), "civ".into()],
            markers_per_attribute: 5,
            content_words: 100,
            min_content: 2,
            max_content: 5,
            dev_fraction: 0.075,
            test_fraction: 0.125,
            seed: 7,
        }
    }
}

impl SyntheticSpec {
    pub fn marker(&self, a: Attribute, i: usize) -> String {
        format!("{}{i}", self.marker_prefixes[a.index()])
    }

    pub fn content_word(i: usize) -> String {
        format!("w{i:03}")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("synthetic spec: {m}")));
        if self.markers_per_attribute == 0 {
            return bad("at least one marker per attribute is required");
        }
        if self.min_content < 2 || self.min_content > self.max_content {
            return bad("content length range must satisfy 2 <= min <= max");
        }
        if self.content_words < self.max_content {
            return bad("fewer content words than the longest sentence needs");
        }
        if self.content_words > 1000 {
            return bad("at most 1000 content words");
        }
        let [p0, p1] = &self.marker_prefixes;
        let clash = |p: &str| p.is_empty() || p == "w" || !p.chars().all(|c| c.is_ascii_lowercase());
        if clash(p0) || clash(p1) || p0.starts_with(p1.as_str()) || p1.starts_with(p0.as_str()) {
            return bad("marker prefixes must be distinct lowercase words, neither a prefix of the other nor \"w\"");
        }
        if self.attributes[0] == self.attributes[1] {
            return bad("attribute names must differ");
        }
        Ok(())
    }

    /// Number of distinct sentences per attribute, saturating.
    pub fn capacity(&self) -> u128 {
        let mut total: u128 = 0;
        for k in self.min_content..=self.max_content {
            let mut perms: u128 = 1;
            for j in 0..k {
                perms = perms.saturating_mul((self.content_words - j) as u128);
            }
            let per_len = perms
                .saturating_mul(k as u128 + 1)
                .saturating_mul(self.markers_per_attribute as u128);
            total = total.saturating_add(per_len);
        }
        total
    }

    pub fn oracle(&self) -> SyntheticOracle {
        let markers = Attribute::BOTH.map(|a| {
            (0..self.markers_per_attribute)
                .map(|i| self.marker(a, i))
                .collect()
        });
        SyntheticOracle { markers }
    }
}

/// Ground truth for the synthetic language.
#[derive(Clone, Debug)]
pub struct SyntheticOracle {
    markers: [HashSet<String>; 2],
}

impl SyntheticOracle {
    pub fn is_marker(&self, token: &str) -> bool {
        self.markers.iter().any(|m| m.contains(token))
    }

    /// Attribute with strictly more markers in `text`; `None` on a tie.
    pub fn attribute(&self, text: &str) -> Option<Attribute> {
        let mut counts = [0usize; 2];
        for tok in text.split_whitespace() {
            for (i, m) in self.markers.iter().enumerate() {
                if m.contains(tok) {
                    counts[i] += 1;
                }
            }
        }
        match counts[0].cmp(&counts[1]) {
            std::cmp::Ordering::Greater => Some(Attribute::First),
            std::cmp::Ordering::Less => Some(Attribute::Second),
            std::cmp::Ordering::Equal => None,
        }
    }

    fn content(&self, text: &str) -> HashSet<String> {
        text.split_whitespace()
            .filter(|t| !self.is_marker(t))
            .map(str::to_string)
            .collect()
    }

    /// Jaccard overlap of the non-marker token sets; 1 when both are empty.
    pub fn content_score(&self, a: &str, b: &str) -> f64 {
        let (sa, sb) = (self.content(a), self.content(b));
        let union = sa.union(&sb).count();
        if union == 0 {
            return 1.0;
        }
        sa.intersection(&sb).count() as f64 / union as f64
    }

    /// Rewrites every marker into the same-index marker of `to`.
    pub fn swap_markers(&self, spec: &SyntheticSpec, text: &str, to: Attribute) -> String {
        let from = to.other();
        text.split_whitespace()
            .map(|t| {
                let prefix = &spec.marker_prefixes[from.index()];
                match t.strip_prefix(prefix.as_str()).and_then(|n| n.parse::<usize>().ok()) {
                    Some(i) if self.markers[from.index()].contains(t) => spec.marker(to, i),
                    _ => t.to_string(),
                }
            })
            .collect::<Vec<_>>()
            .join(" ")
    }
}

fn sentence<R: Rng>(spec: &SyntheticSpec, a: Attribute, rng: &mut R) -> String {
    let k = rng.gen_range(spec.min_content..=spec.max_content);
    let words = sample(rng, spec.content_words, k);
    let split = rng.gen_range(0..=k);
    let marker = spec.marker(a, rng.gen_range(0..spec.markers_per_attribute));
    let mut toks: Vec<String> = words.iter().map(SyntheticSpec::content_word).collect();
    toks.insert(split, marker);
    toks.join(" ")
}

/// `n_per_attribute` distinct sentences per side, split train/dev/test in
/// file order, with scores 1 (first) and 0 (second) from the oracle.
pub fn make_synthetic(spec: &SyntheticSpec, n_per_attribute: usize) -> Result<(PolarizedCorpus, SyntheticOracle)> {
    spec.validate()?;
    if n_per_attribute == 0 {
        return Err(Error::Config("n_per_attribute must be positive".into()));
    }
    // leave headroom so rejection sampling of duplicates terminates quickly
    if (n_per_attribute as u128).saturating_mul(2) > spec.capacity() {
        return Err(Error::Config(format!(
            "synthetic vocabulary too small for {n_per_attribute} distinct sentences per attribute"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut sides: [Vec<ScoredSentence>; 2] = [Vec::new(), Vec::new()];
    for a in Attribute::BOTH {
        let mut seen = HashSet::new();
        let score = if a == Attribute::First { 1.0 } else { 0.0 };
        while seen.len() < n_per_attribute {
            let s = sentence(spec, a, &mut rng);
            if seen.insert(s.clone()) {
                sides[a.index()].push(ScoredSentence { text: s, score });
            }
        }
    }
    let split = SplitCounts::from_fractions(n_per_attribute, spec.dev_fraction, spec.test_fraction)?;
    let [first, second] = sides;
    let provenance = Provenance {
        attributes: spec.attributes.clone(),
        scorer: "synthetic-oracle".into(),
        hi: 0.9,
        lo: 0.1,
        input_sentences: 2 * n_per_attribute,
        counts: [n_per_attribute; 2],
        discarded: 0,
        splits: [split; 2],
        seed: Some(spec.seed),
        generator: Some(serde_json::to_value(spec)?),
    };
    Ok((
        PolarizedCorpus {
            first,
            second,
            provenance,
        },
        spec.oracle(),
    ))
}
