//! Automatic transfer metrics: flip accuracy, perplexity, embedding
//! similarity, BLEU and their geometric mean.

mod bleu;
mod classifier;
mod embedder;
mod lm;
mod models;
mod report;

pub use bleu::{bleu, corpus_bleu, BleuStats, MAX_ORDER};
pub use classifier::{Classifier, ClassifierConfig, TextScorer};
pub use embedder::SentenceEmbedder;
pub use lm::{perplexity, BigramLm, FluencyLm, LanguageModel, LmConfig, UniformLm};
pub use models::{EvalModels, EVAL_MAGIC};
pub use report::{
    accuracy, evaluate, flipped, geometric_mean, mean_similarity, render_table, EvalReport,
    TransferPair,
};
