//! Shared fixtures for the benchmarks.

use orsm_core::orsm::OrsmModel;
use orsm_core::rng::seeded;
use orsm_core::synthetic::{self, LengthModel, SyntheticConfig};
use orsm_core::{Corpus, Document, ModelParams};

/// Synthetic two-topic corpus with `n_docs` documents over `vocab_size` words.
pub fn corpus(n_docs: usize, vocab_size: usize) -> Corpus {
    let cfg = SyntheticConfig {
        n_docs,
        vocab_size,
        purity: 0.9,
        lengths: LengthModel::Uniform { min: 50, max: 150 },
    };
    synthetic::generate(&cfg, 1).unwrap().corpus
}

/// Randomly initialised model for `corpus`.
pub fn model(corpus: &Corpus, n_hidden: usize, softmaxes: u32) -> OrsmModel {
    let docs: Vec<&Document> = corpus.documents.iter().collect();
    OrsmModel::new(ModelParams::init(n_hidden, corpus.vocab_size(), &docs, &mut seeded(2)), softmaxes)
}
