//! Seeded two-topic corpora with known structure.

use rand::Rng;

use crate::corpus::{Corpus, Document, Vocabulary};
use crate::error::{Error, Result};
use crate::rng;
use crate::rsm::sample_counts;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LengthModel {
    /// Uniform on `min..=max`.
    Uniform { min: u32, max: u32 },
    /// `P(N) ∝ N^(-exponent)` on `min..=max`.
    PowerLaw { min: u32, max: u32, exponent: f64 },
}

impl LengthModel {
    fn bounds(&self) -> (u32, u32) {
        match *self {
            LengthModel::Uniform { min, max } | LengthModel::PowerLaw { min, max, .. } => (min, max),
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        match *self {
            LengthModel::Uniform { min, max } => rng.random_range(min..=max),
            LengthModel::PowerLaw { min, max, exponent } => {
                let weights: Vec<f64> = (min..=max).map(|n| (n as f64).powf(-exponent)).collect();
                let total: f64 = weights.iter().sum();
                let mut u = rng.random::<f64>() * total;
                for (i, w) in weights.iter().enumerate() {
                    if u < *w {
                        return min + i as u32;
                    }
                    u -= w;
                }
                max
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub n_docs: usize,
    pub vocab_size: usize,
    /// Probability that a word comes from the document's own topic rather
    /// than the other one.
    pub purity: f64,
    pub lengths: LengthModel,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_docs: 500,
            vocab_size: 20,
            purity: 0.9,
            lengths: LengthModel::Uniform { min: 20, max: 80 },
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    /// Documents labelled 0 or 1 by their dominant topic.
    pub corpus: Corpus,
    /// Word distribution of each topic.
    pub topics: [Vec<f64>; 2],
}

/// Topic `c` puts most of its mass on its own half of the vocabulary with
/// Zipf-like weights, and a small floor on every other word.
pub fn topic_distributions(k: usize) -> [Vec<f64>; 2] {
    let half = k / 2;
    let make = |c: usize| {
        let mut p: Vec<f64> = (0..k)
            .map(|w| {
                let own = if c == 0 { w < half } else { w >= half };
                if own {
                    let rank = if c == 0 { w } else { w - half };
                    1.0 / (rank as f64 + 1.0)
                } else {
                    0.02
                }
            })
            .collect();
        let z: f64 = p.iter().sum();
        p.iter_mut().for_each(|x| *x /= z);
        p
    };
    [make(0), make(1)]
}

pub fn generate(config: &SyntheticConfig, seed: u64) -> Result<SyntheticCorpus> {
    let (min, max) = config.lengths.bounds();
    if config.vocab_size < 2 || config.n_docs == 0 {
        return Err(Error::invalid("synthetic corpus needs K >= 2 and at least one document"));
    }
    if min == 0 || min > max {
        return Err(Error::invalid(format!("bad length range {min}..={max}")));
    }
    if !(0.0..=1.0).contains(&config.purity) {
        return Err(Error::invalid("purity must lie in [0, 1]"));
    }
    let k = config.vocab_size;
    let topics = topic_distributions(k);
    let mixed: [Vec<f64>; 2] = [0, 1].map(|c| {
        (0..k)
            .map(|w| config.purity * topics[c][w] + (1.0 - config.purity) * topics[1 - c][w])
            .collect()
    });
    let mut rng = rng::seeded(seed);
    let mut documents = Vec::with_capacity(config.n_docs);
    for _ in 0..config.n_docs {
        let c = rng.random_range(0..2u32);
        let n = config.lengths.sample(&mut rng);
        let counts = sample_counts(&mixed[c as usize], n, &mut rng)?;
        documents.push(Document::from_dense(&counts, vec![c])?);
    }
    let corpus = Corpus::new(
        Vocabulary::numbered(k),
        documents,
        vec!["topic0".to_string(), "topic1".to_string()],
    )?;
    Ok(SyntheticCorpus { corpus, topics })
}
