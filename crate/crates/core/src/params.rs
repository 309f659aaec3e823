//! The parameter set `{W, a, b}` shared by both models, and training
//! hyperparameters.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::corpus::Document;
use crate::error::{Error, Result};

/// Tied model parameters.
///
/// `weights` is `F x K`, row-major: row `j` holds the weights from hidden
/// topic `j` to every word.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    n_hidden: usize,
    vocab_size: usize,
    pub weights: Vec<f64>,
    pub hidden_bias: Vec<f64>,
    pub word_bias: Vec<f64>,
}

impl ModelParams {
    pub fn zeros(n_hidden: usize, vocab_size: usize) -> Self {
        ModelParams {
            n_hidden,
            vocab_size,
            weights: vec![0.0; n_hidden * vocab_size],
            hidden_bias: vec![0.0; n_hidden],
            word_bias: vec![0.0; vocab_size],
        }
    }

    pub fn from_parts(
        n_hidden: usize,
        vocab_size: usize,
        weights: Vec<f64>,
        hidden_bias: Vec<f64>,
        word_bias: Vec<f64>,
    ) -> Result<Self> {
        if n_hidden == 0 || vocab_size == 0 {
            return Err(Error::shape("hidden and vocabulary sizes must be positive"));
        }
        if weights.len() != n_hidden * vocab_size || hidden_bias.len() != n_hidden || word_bias.len() != vocab_size {
            return Err(Error::shape(format!(
                "parameter lengths ({}, {}, {}) do not fit F={n_hidden}, K={vocab_size}",
                weights.len(),
                hidden_bias.len(),
                word_bias.len()
            )));
        }
        Ok(ModelParams {
            n_hidden,
            vocab_size,
            weights,
            hidden_bias,
            word_bias,
        })
    }

    /// Gaussian weights (sd 0.01), zero hidden biases, and word biases set to
    /// the log of the add-one smoothed unigram of `documents`.
    pub fn init<R: Rng + ?Sized>(n_hidden: usize, vocab_size: usize, documents: &[&Document], rng: &mut R) -> Self {
        let mut p = ModelParams::zeros(n_hidden, vocab_size);
        let normal = Normal::new(0.0, 0.01).expect("valid normal");
        for w in p.weights.iter_mut() {
            *w = normal.sample(rng);
        }
        p.word_bias = log_unigram(vocab_size, documents);
        p
    }

    pub fn n_hidden(&self) -> usize {
        self.n_hidden
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    /// Number of trainable scalars, `F*K + F + K`.
    pub fn n_parameters(&self) -> usize {
        self.n_hidden * self.vocab_size + self.n_hidden + self.vocab_size
    }

    #[inline]
    pub fn row(&self, j: usize) -> &[f64] {
        &self.weights[j * self.vocab_size..(j + 1) * self.vocab_size]
    }

    #[inline]
    pub fn weight(&self, j: usize, k: usize) -> f64 {
        self.weights[j * self.vocab_size + k]
    }

    pub fn is_finite(&self) -> bool {
        self.weights
            .iter()
            .chain(&self.hidden_bias)
            .chain(&self.word_bias)
            .all(|x| x.is_finite())
    }

    /// `W v`, length `F`.
    pub fn project_up(&self, v: &[f64]) -> Vec<f64> {
        (0..self.n_hidden).map(|j| crate::math::dot(self.row(j), v)).collect()
    }

    /// `Wᵀ h + b`, length `K`.
    pub fn project_down(&self, h: &[f64]) -> Vec<f64> {
        let mut out = self.word_bias.clone();
        for (j, &hj) in h.iter().enumerate() {
            if hj == 0.0 {
                continue;
            }
            for (o, &w) in out.iter_mut().zip(self.row(j)) {
                *o += hj * w;
            }
        }
        out
    }

    pub(crate) fn check_visible(&self, v_len: usize) -> Result<()> {
        if v_len != self.vocab_size {
            return Err(Error::shape(format!(
                "count vector has length {v_len}, model has K={}",
                self.vocab_size
            )));
        }
        Ok(())
    }

    pub(crate) fn check_hidden(&self, h_len: usize) -> Result<()> {
        if h_len != self.n_hidden {
            return Err(Error::shape(format!(
                "hidden vector has length {h_len}, model has F={}",
                self.n_hidden
            )));
        }
        Ok(())
    }
}

/// Log of the add-one smoothed unigram distribution.
pub fn log_unigram(vocab_size: usize, documents: &[&Document]) -> Vec<f64> {
    let mut counts = vec![1.0; vocab_size];
    for d in documents {
        for &(w, c) in d.counts() {
            counts[w as usize] += c as f64;
        }
    }
    let total: f64 = counts.iter().sum();
    counts.iter().map(|c| (c / total).ln()).collect()
}

/// CD-k step schedule: `k` starts at `start`, grows by one every `every`
/// updates, and stops at `max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CdSchedule {
    pub start: usize,
    pub max: usize,
    pub every: u64,
}

impl CdSchedule {
    pub fn constant(k: usize) -> Self {
        CdSchedule { start: k, max: k, every: u64::MAX }
    }

    pub fn k_at(&self, update: u64) -> usize {
        let steps = (update / self.every.max(1)).min(usize::MAX as u64) as usize;
        self.start.saturating_add(steps).min(self.max)
    }
}

impl Default for CdSchedule {
    fn default() -> Self {
        CdSchedule {
            start: 1,
            max: 20,
            every: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainHyper {
    /// Initial learning rate `ε₀`; the rate at update `t` is `ε₀ / (1 + t/T)`.
    pub learning_rate: f64,
    /// Decay horizon `T` in updates.
    pub decay_horizon: f64,
    pub weight_decay: f64,
    /// Target mean hidden activation for the KL sparsity penalty.
    pub sparsity_target: f64,
    pub sparsity_weight: f64,
    pub minibatch_size: usize,
    pub cd_schedule: CdSchedule,
}

impl Default for TrainHyper {
    fn default() -> Self {
        TrainHyper {
            learning_rate: 1e-3,
            decay_horizon: 10_000.0,
            weight_decay: 1e-4,
            sparsity_target: 0.1,
            sparsity_weight: 0.01,
            minibatch_size: 128,
            cd_schedule: CdSchedule::default(),
        }
    }
}

impl TrainHyper {
    pub fn learning_rate_at(&self, update: u64) -> f64 {
        self.learning_rate / (1.0 + update as f64 / self.decay_horizon)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning rate must be finite and nonnegative"));
        }
        if !(self.decay_horizon > 0.0) {
            return Err(Error::invalid("decay horizon must be positive"));
        }
        if self.weight_decay < 0.0 || self.sparsity_weight < 0.0 {
            return Err(Error::invalid("penalty weights must be nonnegative"));
        }
        if !(self.sparsity_target > 0.0 && self.sparsity_target < 1.0) {
            return Err(Error::invalid("sparsity target must lie in (0, 1)"));
        }
        if self.minibatch_size == 0 {
            return Err(Error::invalid("minibatch size must be positive"));
        }
        let s = &self.cd_schedule;
        if s.start == 0 || s.max < s.start {
            return Err(Error::invalid("CD schedule must start at k >= 1 and never decrease"));
        }
        Ok(())
    }
}
