//! Corpus loading, sentence splitting, polarization and the synthetic corpus.

mod corpus;
mod output;
mod polarize;
mod sentences;
mod synthetic;

pub use corpus::{load_corpus, parse_corpus, CorpusFormat, LoadedCorpus, RawComment};
pub use output::{build_vocab, write_prepared, OutputPaths, PreparedData, Split, VOCAB_FILE};
pub use polarize::{
    polarize, polarize_scored, PolarizedCorpus, Provenance, ScoredSentence, Scorer, SplitCounts,
};
pub use sentences::split_sentences;
pub use synthetic::{make_synthetic, SyntheticOracle, SyntheticSpec};
