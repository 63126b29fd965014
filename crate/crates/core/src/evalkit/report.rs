use serde::{Deserialize, Serialize};

use super::bleu::BleuStats;
use super::classifier::Classifier;
use super::embedder::SentenceEmbedder;
use super::lm::{perplexity, LanguageModel};
use crate::error::{Error, Result};
use crate::text::{Attribute, TokenSequence, NUM_RESERVED};

/// A source sentence, its rewrite and, optionally, a human rewrite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferPair {
    pub source: TokenSequence,
    pub output: TokenSequence,
    pub destination: Attribute,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<TokenSequence>,
}

impl TransferPair {
    /// Pairs `source` with `output_ids` rewritten into the other attribute.
    pub fn new(source: TokenSequence, output_ids: Vec<usize>, reference: Option<TokenSequence>) -> Self {
        let destination = source.attribute.other();
        TransferPair {
            output: TokenSequence::new(output_ids, destination),
            source,
            destination,
            reference,
        }
    }

    fn check(&self) -> Result<()> {
        if self.destination != self.source.attribute.other() {
            return Err(Error::Eval("destination must be the other attribute".into()));
        }
        Ok(())
    }
}

/// `(acc · sim / ppl)^(1/3)`, or 0 when `acc` or `sim` is not positive.
pub fn geometric_mean(acc: f64, ppl: f64, sim: f64) -> Result<f64> {
    if !(ppl > 0.0) {
        return Err(Error::Eval(format!("perplexity must be positive, got {ppl}")));
    }
    if acc <= 0.0 || sim <= 0.0 {
        return Ok(0.0);
    }
    Ok((acc * sim / ppl).cbrt())
}

/// Whether `score` (probability of the first attribute) is strictly past 0.5
/// on the side of `destination`.
pub fn flipped(score: f32, destination: Attribute) -> bool {
    match destination {
        Attribute::First => score > 0.5,
        Attribute::Second => score < 0.5,
    }
}

/// Share of outputs the classifier places on their destination side.
pub fn accuracy(pairs: &[TransferPair], classifier: &Classifier) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Eval("accuracy of an empty set".into()));
    }
    let outputs: Vec<&[usize]> = pairs.iter().map(|p| p.output.ids.as_slice()).collect();
    let scores = classifier.scores(&outputs)?;
    let hits = pairs
        .iter()
        .zip(&scores)
        .filter(|(p, &s)| flipped(s, p.destination))
        .count();
    Ok(hits as f64 / pairs.len() as f64)
}

/// Mean cosine similarity over aligned pairs of sequences.
pub fn mean_similarity<A: AsRef<[usize]>, B: AsRef<[usize]>>(
    a: &[A],
    b: &[B],
    embedder: &SentenceEmbedder,
) -> Result<f64> {
    if a.is_empty() || a.len() != b.len() {
        return Err(Error::Eval("similarity needs equally many non-empty pairs".into()));
    }
    let mut total = 0.0;
    for (x, y) in a.iter().zip(b) {
        total += embedder.similarity(x.as_ref(), y.as_ref())?;
    }
    Ok(total / a.len() as f64)
}

fn content(ids: &[usize]) -> Vec<usize> {
    ids.iter().copied().filter(|&t| t >= NUM_RESERVED).collect()
}

fn corpus_bleu_ids<'a>(cands: impl Iterator<Item = &'a [usize]>, refs: impl Iterator<Item = &'a [usize]>) -> f64 {
    let mut total = BleuStats::default();
    for (c, r) in cands.zip(refs) {
        let (c, r) = (content(c), content(r));
        total.add(&BleuStats::sentence(&c, &[&r]));
    }
    total.score()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub pairs: usize,
    pub acc: f64,
    pub ppl: f64,
    pub self_sim: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ref_sim: Option<f64>,
    pub self_bleu: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ref_bleu: Option<f64>,
    pub gm: f64,
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// All metrics for `pairs`; reference metrics only when every pair has one.
pub fn evaluate(
    pairs: &[TransferPair],
    classifier: &Classifier,
    lm: &dyn LanguageModel,
    embedder: &SentenceEmbedder,
) -> Result<EvalReport> {
    if pairs.is_empty() {
        return Err(Error::Eval("nothing to evaluate".into()));
    }
    for p in pairs {
        p.check()?;
    }
    let outputs: Vec<&[usize]> = pairs.iter().map(|p| p.output.ids.as_slice()).collect();
    let sources: Vec<&[usize]> = pairs.iter().map(|p| p.source.ids.as_slice()).collect();
    let acc = accuracy(pairs, classifier)?;
    let ppl = perplexity(&outputs, lm)?;
    let self_sim = mean_similarity(&sources, &outputs, embedder)?;
    let self_bleu = corpus_bleu_ids(outputs.iter().copied(), sources.iter().copied());
    let refs: Option<Vec<&[usize]>> = pairs
        .iter()
        .map(|p| p.reference.as_ref().map(|r| r.ids.as_slice()))
        .collect();
    let (ref_sim, ref_bleu) = match refs {
        Some(refs) => (
            Some(mean_similarity(&refs, &outputs, embedder)?),
            Some(corpus_bleu_ids(outputs.iter().copied(), refs.iter().copied())),
        ),
        None => (None, None),
    };
    Ok(EvalReport {
        pairs: pairs.len(),
        acc,
        ppl,
        self_sim,
        ref_sim,
        self_bleu,
        ref_bleu,
        gm: geometric_mean(acc, ppl, self_sim)?,
    })
}

/// Fixed-width table: system, ACC, PPL, self-SIM, GM, then the optional columns.
pub fn render_table(rows: &[(&str, &EvalReport)]) -> String {
    let name_w = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(0).max(6);
    let opt = |v: Option<f64>, prec: usize| v.map_or("-".to_string(), |x| format!("{x:.prec$}"));
    let mut s = format!(
        "{:<name_w$}  {:>6}  {:>8}  {:>8}  {:>6}  {:>9}  {:>7}  {:>8}  {:>5}\n",
        "system", "ACC", "PPL", "self-SIM", "GM", "self-BLEU", "ref-SIM", "ref-BLEU", "n"
    );
    for (name, r) in rows {
        s.push_str(&format!(
            "{:<name_w$}  {:>5.1}%  {:>8.2}  {:>7.1}%  {:>6.3}  {:>9.2}  {:>7}  {:>8}  {:>5}\n",
            name,
            100.0 * r.acc,
            r.ppl,
            100.0 * r.self_sim,
            r.gm,
            r.self_bleu,
            opt(r.ref_sim.map(|x| 100.0 * x), 1),
            opt(r.ref_bleu, 2),
            r.pairs
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometric_mean_closed_form() {
        assert_eq!(geometric_mean(1.0, 1.0, 1.0).unwrap(), 1.0);
        let (a, p, s) = (0.3, 7.0, 0.45);
        assert_eq!(geometric_mean(a, p, s).unwrap(), (a * s / p).cbrt());
        assert_eq!(geometric_mean(0.0, 5.0, 0.9).unwrap(), 0.0);
        assert_eq!(geometric_mean(0.5, 5.0, -0.1).unwrap(), 0.0);
        assert!(geometric_mean(0.5, 0.0, 0.5).is_err());
    }

    #[test]
    fn flip_threshold_is_strict() {
        assert!(flipped(0.9, Attribute::First));
        assert!(!flipped(0.5, Attribute::First));
        assert!(!flipped(0.5, Attribute::Second));
        assert!(flipped(0.1, Attribute::Second));
    }

    #[test]
    fn table_has_header_and_one_line_per_row() {
        let r = EvalReport {
            pairs: 3,
            acc: 0.75,
            ppl: 5.2,
            self_sim: 0.7,
            ref_sim: None,
            self_bleu: 40.0,
            ref_bleu: None,
            gm: geometric_mean(0.75, 5.2, 0.7).unwrap(),
        };
        let t = render_table(&[("cae", &r), ("copy", &r)]);
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with("system"));
        assert!(lines[1].contains("75.0%") && lines[1].contains("0.466"));
        assert!(lines.iter().all(|l| l.len() == lines[0].len()));
    }
}
